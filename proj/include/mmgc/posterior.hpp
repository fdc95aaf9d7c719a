#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

#include "mmgc/csv.hpp"
#include "mmgc/data.hpp"
#include "mmgc/model_base.hpp"
#include "mmgc/sampler.hpp"

namespace mmgc {

namespace detail {

// Canonical labels in order of first appearance, so label permutations of the
// same partition compare equal.
inline std::vector<int> canonical_partition(const std::vector<int>& s) {
  std::vector<int> out(s.size());
  std::map<int, int> relabel;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto [it, fresh] =
        relabel.insert({s[i], static_cast<int>(relabel.size())});
    out[i] = it->second;
  }
  return out;
}

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

// Least-squares point-estimate partition: among the sampled partitions,
// minimize sum_{i<j} (1{s_i=s_j} - pihat_ij)^2 against the empirical
// co-clustering frequencies; ties break to the earliest draw.
inline std::vector<int> dahl_partition(
    const std::vector<std::vector<int>>& draws) {
  if (draws.empty()) throw std::invalid_argument("dahl_partition: no draws");
  const std::size_t n = draws.front().size();
  Eigen::MatrixXd pihat = Eigen::MatrixXd::Zero(n, n);
  for (const auto& s : draws) {
    if (s.size() != n)
      throw std::invalid_argument("dahl_partition: ragged draws");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (s[i] == s[j]) pihat(i, j) += 1.0;
  }
  pihat /= static_cast<double>(draws.size());

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_t = 0;
  for (std::size_t t = 0; t < draws.size(); ++t) {
    const auto& s = draws[t];
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = (s[i] == s[j] ? 1.0 : 0.0) - pihat(i, j);
        loss += d * d;
      }
    if (loss < best) {
      best = loss;
      best_t = t;
    }
  }
  return detail::canonical_partition(draws[best_t]);
}

struct MarginSummary {
  double time = 0.0;
  double mean = 0.0;
  double q025 = 0.0, q25 = 0.0, q75 = 0.0, q975 = 0.0;
};

// Counterfactual CBT-vs-UC contrast at fixed random effects: per draw the
// effect at time t is beta_T + beta_Tt t + beta_Tt2 t^2 (all client-level
// terms cancel in the within-client toggle of T).
inline std::vector<MarginSummary> predictive_margins(
    const std::vector<Eigen::VectorXd>& beta_draws,
    const std::vector<double>& times) {
  if (beta_draws.empty())
    throw std::invalid_argument("predictive_margins: no draws");
  std::vector<MarginSummary> out;
  for (double t : times) {
    std::vector<double> effect;
    effect.reserve(beta_draws.size());
    for (const auto& b : beta_draws)
      effect.push_back(b[0] + b[3] * t + b[4] * t * t);
    std::sort(effect.begin(), effect.end());
    MarginSummary m;
    m.time = t;
    double acc = 0.0;
    for (double e : effect) acc += e;
    m.mean = acc / static_cast<double>(effect.size());
    m.q025 = detail::quantile_sorted(effect, 0.025);
    m.q25 = detail::quantile_sorted(effect, 0.25);
    m.q75 = detail::quantile_sorted(effect, 0.75);
    m.q975 = detail::quantile_sorted(effect, 0.975);
    out.push_back(m);
  }
  return out;
}

struct CurvePoint {
  long client_id = 0;
  double time = 0.0;
  double fit = 0.0;
};

// Within-sample fitted growth curves at posterior means, each client keeping
// its own MM weights.
inline std::vector<CurvePoint> growth_curves(const ChainOutput& chain,
                                             const MMDataset& ds,
                                             const std::vector<double>& grid) {
  const int t_draws = chain.n_draws();
  if (t_draws == 0) throw std::invalid_argument("growth_curves: empty chain");
  const int n = ds.n_clients;
  double mu = 0.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(kNumFixef);
  Eigen::MatrixXd ce = Eigen::MatrixXd::Zero(n, kQ);
  for (int t = 0; t < t_draws; ++t) {
    mu += chain.mu[t];
    beta += chain.beta[t];
    ce += chain.client_effects[t];
  }
  mu /= t_draws;
  beta /= t_draws;
  ce /= t_draws;

  Eigen::VectorXd gamma_mean;
  Eigen::MatrixXd gamma_mv_mean;
  if (chain.model == ModelKind::mmcar && !chain.gamma_uni.empty()) {
    gamma_mean = Eigen::VectorXd::Zero(ds.n_modules);
    for (const auto& g : chain.gamma_uni) gamma_mean += g;
    gamma_mean /= static_cast<double>(chain.gamma_uni.size());
  }
  if (chain.model == ModelKind::mmmv && !chain.gamma_mv.empty()) {
    gamma_mv_mean = Eigen::MatrixXd::Zero(ds.n_modules, kQ);
    for (const auto& g : chain.gamma_mv) gamma_mv_mean += g;
    gamma_mv_mean /= static_cast<double>(chain.gamma_mv.size());
  }

  std::vector<CurvePoint> out;
  out.reserve(static_cast<std::size_t>(n) * grid.size());
  for (int i = 0; i < n; ++i) {
    double module_level = 0.0;  // time-constant module term (mmcar)
    Eigen::VectorXd module_poly = Eigen::VectorXd::Zero(kQ);
    if (chain.model == ModelKind::mmcar && gamma_mean.size() > 0)
      for (int s : ds.attendance[i])
        module_level += ds.weights_add(i, s) * gamma_mean[s];
    if (chain.model == ModelKind::mmmv && gamma_mv_mean.size() > 0)
      for (int s : ds.attendance[i])
        module_poly += ds.weights_add(i, s) * gamma_mv_mean.row(s).transpose();
    for (double t : grid) {
      const Eigen::RowVectorXd z = ranef_row(t);
      double fit = mu + fixef_row(ds.treatment[i], t).tail(kNumFixef).dot(beta);
      fit += z.dot(ce.row(i));
      fit += module_level + z.dot(module_poly);
      out.push_back(CurvePoint{ds.client_ids[i], t, fit});
    }
  }
  return out;
}

struct TrajectoryCell {
  int cluster = 0;   // 1-based Dahl cluster
  long group_id = 0;
  long module_id = 0;
  Eigen::VectorXd coef;  // q polynomial coefficients
};

// Cluster-level module-effect trajectories for the DDP: per draw each client
// inherits its cluster's a_{s} columns; client-level coefficients are
// averaged inside each Dahl cluster per draw and then across draws, which
// sidesteps label switching entirely.
inline std::vector<TrajectoryCell> module_trajectories(
    const ChainOutput& chain, const MMDataset& ds,
    const std::vector<int>& partition, bool include_uc = true) {
  if (chain.model != ModelKind::ddp)
    throw std::invalid_argument("module_trajectories: DDP chains only");
  if (static_cast<int>(partition.size()) != ds.n_clients)
    throw std::invalid_argument(
        "module_trajectories: partition length != number of clients");
  const int t_draws = chain.n_draws();
  const int n = ds.n_clients;
  const int S = ds.n_modules;
  int n_cells = 0;
  for (int c : partition) n_cells = std::max(n_cells, c + 1);

  std::vector<std::vector<int>> members(n_cells);
  for (int i = 0; i < n; ++i) {
    if (!include_uc && ds.treatment[i] == 0) continue;
    members[partition[i]].push_back(i);
  }

  std::vector<TrajectoryCell> out;
  for (int c = 0; c < n_cells; ++c) {
    if (members[c].empty()) continue;
    Eigen::MatrixXd coef_sum = Eigen::MatrixXd::Zero(kQ, S);
    for (int t = 0; t < t_draws; ++t) {
      Eigen::MatrixXd draw_avg = Eigen::MatrixXd::Zero(kQ, S);
      for (int i : members[c]) {
        const Eigen::MatrixXd& delta =
            chain.ddp_locations[t][chain.assignment[t][i]];
        draw_avg += delta.rightCols(S);
      }
      coef_sum += draw_avg / static_cast<double>(members[c].size());
    }
    coef_sum /= static_cast<double>(t_draws);
    for (int s = 0; s < S; ++s) {
      TrajectoryCell cell;
      cell.cluster = c + 1;
      cell.group_id = ds.group_ids[ds.module_group[s]];
      cell.module_id = ds.module_ids[s];
      cell.coef = coef_sum.col(s);
      out.push_back(std::move(cell));
    }
  }
  return out;
}

inline double trajectory_value(const Eigen::VectorXd& coef, double t) {
  return coef[0] + coef[1] * t + coef[2] * t * t;
}

// Adjusted Rand index between two partitions of the same items.
inline double adjusted_rand_index(const std::vector<int>& a,
                                  const std::vector<int>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("adjusted_rand_index: size mismatch");
  const auto ca = detail::canonical_partition(a);
  const auto cb = detail::canonical_partition(b);
  const int ka = 1 + *std::max_element(ca.begin(), ca.end());
  const int kb = 1 + *std::max_element(cb.begin(), cb.end());
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
  for (std::size_t i = 0; i < ca.size(); ++i) table(ca[i], cb[i]) += 1.0;
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_cells = 0.0;
  for (int r = 0; r < ka; ++r)
    for (int c = 0; c < kb; ++c) sum_cells += choose2(table(r, c));
  double sum_rows = 0.0, sum_cols = 0.0;
  for (int r = 0; r < ka; ++r) sum_rows += choose2(table.row(r).sum());
  for (int c = 0; c < kb; ++c) sum_cols += choose2(table.col(c).sum());
  const double total = choose2(static_cast<double>(a.size()));
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (sum_cells - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Plot-data writers.
// ---------------------------------------------------------------------------

inline void write_margins_csv(const std::vector<MarginSummary>& margins,
                              const std::filesystem::path& path) {
  csv::Writer w(path);
  w.row("time", "mean", "q025", "q25", "q75", "q975");
  for (const auto& m : margins)
    w.row(m.time, m.mean, m.q025, m.q25, m.q75, m.q975);
}

inline void write_curves_csv(const std::vector<CurvePoint>& curves,
                             const std::filesystem::path& path) {
  csv::Writer w(path);
  w.row("client", "time", "fit");
  for (const auto& c : curves) w.row(c.client_id, c.time, c.fit);
}

inline void write_trajectories_csv(const std::vector<TrajectoryCell>& cells,
                                   const std::vector<double>& grid,
                                   const std::filesystem::path& path) {
  csv::Writer w(path);
  w.row("cluster", "group", "module", "time", "effect");
  for (const auto& cell : cells)
    for (double t : grid)
      w.row(cell.cluster, cell.group_id, cell.module_id, t,
            trajectory_value(cell.coef, t));
}

inline void write_coefficients_csv(const std::vector<TrajectoryCell>& cells,
                                   const std::filesystem::path& path) {
  csv::Writer w(path);
  w.row("cluster", "group", "module", "order", "value");
  for (const auto& cell : cells)
    for (int k = 0; k < kQ; ++k)
      w.row(cell.cluster, cell.group_id, cell.module_id, k + 1, cell.coef[k]);
}

inline void write_partition_csv(const std::vector<int>& partition,
                                const MMDataset& ds,
                                const std::filesystem::path& path) {
  csv::Writer w(path);
  w.row("client_id", "cluster");
  for (int i = 0; i < ds.n_clients; ++i)
    w.row(ds.client_ids[i], partition[i] + 1);
}

}  // namespace mmgc
