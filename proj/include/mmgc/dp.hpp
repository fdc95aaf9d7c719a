#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmgc/numerics.hpp"
#include "mmgc/rng.hpp"

namespace mmgc::dp {

// Cluster bookkeeping for the marginalized (Polya urn) Dirichlet process.
// Locations are generic vectors: q-dimensional client effects for the
// additive models, vectorized q(S+1) client-by-module matrices for the DDP.
struct ClusterState {
  std::vector<int> assignment;             // n, values in [0, M)
  std::vector<Eigen::VectorXd> locations;  // M
  std::vector<int> counts;                 // M
  double alpha = 1.0;

  int n() const { return static_cast<int>(assignment.size()); }
  int n_clusters() const { return static_cast<int>(locations.size()); }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(n_clusters());
    for (int i = 0; i < n(); ++i) out[assignment[i]].push_back(i);
    return out;
  }

  void validate() const {
    if (counts.size() != locations.size())
      throw std::logic_error("ClusterState: counts/locations size mismatch");
    int total = 0;
    for (int c : counts) {
      if (c < 1) throw std::logic_error("ClusterState: empty live cluster");
      total += c;
    }
    if (total != n())
      throw std::logic_error("ClusterState: counts do not sum to n");
    for (int s : assignment)
      if (s < 0 || s >= n_clusters())
        throw std::logic_error("ClusterState: assignment out of range");
  }

  // Removes client i from its cluster, compacting if the cluster dies.
  void detach(int i) {
    const int m = assignment[i];
    assignment[i] = -1;
    if (--counts[m] > 0) return;
    counts.erase(counts.begin() + m);
    locations.erase(locations.begin() + m);
    for (int& s : assignment)
      if (s > m) --s;
  }
};

// One full Polya-urn pass over clients in a fresh uniform visit order.
// Existing cluster m gets weight counts_m * exp(log_lik(i, location_m)); a
// new cluster gets alpha * exp(log_marginal(i)) and, when selected, a
// location drawn from its single-observation conjugate posterior.
template <class LogLik, class LogMarginal, class DrawLocation>
void urn_sweep(ClusterState& state, LogLik&& log_lik,
               LogMarginal&& log_marginal, DrawLocation&& draw_location,
               RngStream& rng) {
  const int n = state.n();
  const std::vector<int> order = rng.permutation(n);
  std::vector<double> logw;
  std::vector<double> w;
  for (int idx = 0; idx < n; ++idx) {
    const int i = order[idx];
    state.detach(i);
    const int m_live = state.n_clusters();
    logw.assign(m_live + 1, 0.0);
    for (int m = 0; m < m_live; ++m)
      logw[m] = std::log(static_cast<double>(state.counts[m])) +
                log_lik(i, state.locations[m]);
    logw[m_live] = std::log(state.alpha) + log_marginal(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logw) {
      if (std::isnan(v))
        throw std::runtime_error("urn_sweep: non-finite log-density for client " +
                                 std::to_string(i));
      mx = std::max(mx, v);
    }
    if (!std::isfinite(mx))
      throw std::runtime_error("urn_sweep: non-finite log-density for client " +
                               std::to_string(i));
    w.assign(logw.size(), 0.0);
    for (std::size_t k = 0; k < logw.size(); ++k) w[k] = std::exp(logw[k] - mx);
    const int pick = static_cast<int>(rng.categorical(w));
    if (pick == m_live) {
      state.locations.push_back(draw_location(i));
      state.counts.push_back(1);
      state.assignment[i] = m_live;
    } else {
      state.counts[pick]++;
      state.assignment[i] = pick;
    }
  }
}

// Redraw every live location from its conjugate Gaussian full conditional
// given the cluster's members.
template <class ClusterPosterior>
void resample_locations(ClusterState& state, ClusterPosterior&& posterior,
                        RngStream& rng) {
  const auto members = state.members();
  for (int m = 0; m < state.n_clusters(); ++m) {
    const PrecisionGaussian pg = posterior(members[m]);
    state.locations[m] = sample_canonical_gaussian(pg, rng);
  }
}

// Escobar-West auxiliary-variable update for the DP concentration under an
// alpha ~ Gamma(a1, b1) prior.
inline double update_alpha(int n_clusters, int n, double alpha, double a1,
                           double b1, RngStream& rng) {
  if (n_clusters < 1 || n < 1)
    throw std::invalid_argument("update_alpha: need n >= 1 and M >= 1");
  const double eta = rng.beta(alpha + 1.0, static_cast<double>(n));
  const double rate = b1 - std::log(eta);
  const double odds =
      (a1 + n_clusters - 1.0) / (static_cast<double>(n) * rate);
  const double shape = (rng.uniform() < odds / (1.0 + odds))
                           ? a1 + n_clusters
                           : a1 + n_clusters - 1.0;
  return rng.gamma(shape, rate);
}

// Sequential Chinese-restaurant draw; used to initialize chains and for
// prior simulation.
inline std::vector<int> draw_crp_partition(int n, double alpha,
                                           RngStream& rng) {
  std::vector<int> assignment(n, 0);
  std::vector<int> counts;
  for (int i = 0; i < n; ++i) {
    std::vector<double> weights(counts.size() + 1);
    for (std::size_t m = 0; m < counts.size(); ++m)
      weights[m] = static_cast<double>(counts[m]);
    weights[counts.size()] = alpha;
    const int pick = static_cast<int>(rng.categorical(weights));
    assignment[i] = pick;
    if (pick == static_cast<int>(counts.size()))
      counts.push_back(1);
    else
      counts[pick]++;
  }
  return assignment;
}

}  // namespace mmgc::dp
