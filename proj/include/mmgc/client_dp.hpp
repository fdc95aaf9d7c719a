#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmgc/dp.hpp"
#include "mmgc/model_base.hpp"
#include "mmgc/numerics.hpp"

namespace mmgc {

inline Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m,
                                   const char* what) {
  return cholesky_spd(m, what)
      .solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

// Conjugate full conditional of a cluster location b* given its members.
inline PrecisionGaussian client_location_conditional(
    const ModelData& md, const std::vector<Eigen::VectorXd>& ytilde,
    const Eigen::MatrixXd& lambda, double tau_eps,
    const std::vector<int>& members) {
  PrecisionGaussian pg;
  pg.precision = lambda;
  pg.shift = Eigen::VectorXd::Zero(kQ);
  for (int i : members) {
    const ClientBlock& cb = md.clients[i];
    pg.precision += tau_eps * cb.ZtZ;
    pg.shift += tau_eps * (cb.Z.transpose() * ytilde[i]);
  }
  return pg;
}

// Urn sweep plus location refresh for the DP prior on client effects b_i with
// Gaussian base N_q(0, Lambda^{-1}). ytilde holds, per client, the data net
// of fixed effects and module terms. The new-cluster weight integrates b out
// in observation space: an o_i-dimensional Gaussian convolution.
inline void update_clients_dp(dp::ClusterState& clusters, const ModelData& md,
                              const std::vector<Eigen::VectorXd>& ytilde,
                              const Eigen::MatrixXd& lambda, double tau_eps,
                              RngStream& rng) {
  const Eigen::MatrixXd lambda_inv = inverse_spd(lambda, "client base");

  auto log_lik = [&](int i, const Eigen::VectorXd& loc) {
    const ClientBlock& cb = md.clients[i];
    const Eigen::VectorXd resid = ytilde[i] - cb.Z * loc;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < resid.size(); ++j)
      acc += log_normal_pdf(resid[j], tau_eps);
    return acc;
  };
  auto log_marginal = [&](int i) {
    return log_convolved_marginal(ytilde[i], md.clients[i].Z, lambda_inv, 1.0,
                                  tau_eps);
  };
  auto draw_location = [&](int i) {
    return sample_canonical_gaussian(
        client_location_conditional(md, ytilde, lambda, tau_eps, {i}), rng);
  };
  dp::urn_sweep(clusters, log_lik, log_marginal, draw_location, rng);

  auto posterior = [&](const std::vector<int>& members) {
    return client_location_conditional(md, ytilde, lambda, tau_eps, members);
  };
  dp::resample_locations(clusters, posterior, rng);
}

// Per-observation contribution z_ij' b_i stacked over all clients.
inline Eigen::VectorXd client_effect_part(const ModelData& md,
                                          const dp::ClusterState& clusters) {
  Eigen::VectorXd out(md.N);
  for (int i = 0; i < md.n; ++i) {
    const ClientBlock& cb = md.clients[i];
    out.segment(cb.obs_begin, cb.Z.rows()) =
        cb.Z * clusters.locations[clusters.assignment[i]];
  }
  return out;
}

}  // namespace mmgc
