#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "mmgc/client_dp.hpp"
#include "mmgc/data.hpp"
#include "mmgc/graph.hpp"
#include "mmgc/model_base.hpp"
#include "mmgc/model_ddp.hpp"
#include "mmgc/numerics.hpp"
#include "mmgc/rng.hpp"

namespace mmgc {

// Ground-truth generator: clients attend runs of consecutive modules inside
// open-enrollment blocks, cluster-level q x (S+1) effect matrices come from
// the separable proper-CAR base, and responses follow the quadratic
// growth-curve mean.
struct SimConfig {
  int clients_cbt = 132;
  int clients_uc = 168;
  int n_modules = 24;
  int n_groups = 1;
  int block_size = 4;
  int attend_count = 4;
  std::vector<double> times = {0.0, 3.0, 6.0};
  double dropout = 0.0;  // per-follow-up-wave missingness probability
  int min_per_module = 0;  // 0: derived from the average module load
  int max_per_module = 0;
  int max_attempts = 10000;
};

struct SimTruth {
  double mu = 35.0;
  double tau_eps = 0.1;
  double rho_gen = 0.7;
  // Model order (T, t, t^2, Tt, Tt^2).
  Eigen::VectorXd beta = (Eigen::VectorXd(kNumFixef) << 0.0, -3.0, 0.25, -2.5,
                          0.25)
                             .finished();
  Eigen::MatrixXd lambda_inv =
      (Eigen::MatrixXd(3, 3) << 50.0, -12.0, 0.5, -12.0, 16.0, -1.2, 0.5, -1.2,
       0.12)
          .finished();
  int n_clusters = 4;
  std::vector<Eigen::MatrixXd> cluster_locations;  // q x (S+1)
  std::vector<int> assignment;                     // per client, 0-based

  // Treatment contrast beta_T + beta_Tt t + beta_Tt2 t^2.
  double treatment_effect(double t) const {
    return beta[0] + beta[3] * t + beta[4] * t * t;
  }
};

// The base 24-module design pins loads to [11, 26]; other sizes keep the
// floor(avg/2) lower bound and take a dispersion-sized cushion above.
inline std::pair<int, int> default_module_bounds(const SimConfig& cfg) {
  const double avg = static_cast<double>(cfg.clients_cbt) * cfg.attend_count /
                     static_cast<double>(cfg.n_modules);
  if (cfg.n_modules == 24 && std::abs(avg - 22.0) < 1e-9) return {11, 26};
  const int lo = std::max(1, static_cast<int>(std::floor(avg / 2.0)));
  const int hi = static_cast<int>(std::ceil(avg + 4.0 * std::sqrt(avg)));
  return {lo, hi};
}

// Cluster-location draws from the generating base; exposed separately so the
// implied covariance can be checked against the CAR structure directly.
inline std::vector<Eigen::MatrixXd> draw_cluster_locations(
    int count, const Eigen::MatrixXd& lambda_inv, const AdjacencyStructure& adj,
    double rho, RngStream& rng) {
  const int S = adj.n_modules;
  const Eigen::MatrixXd lambda = inverse_spd(lambda_inv, "sim lambda");
  const CarPrecision q =
      proper_car_precision(adj, Eigen::VectorXd::Constant(adj.n_groups, rho));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(S + 1, S + 1);
  p(0, 0) = 1.0;
  p.block(1, 1, S, S) = q.matrix;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(count);
  for (int m = 0; m < count; ++m)
    out.push_back(sample_matrix_normal_kron(lambda, p, rng));
  return out;
}

inline std::pair<MMDataset, SimTruth> generate(const SimConfig& cfg,
                                               RngStream& rng) {
  if (cfg.n_groups < 1 || cfg.n_modules < 2 * cfg.n_groups)
    throw std::invalid_argument("simulate: each group needs >= 2 modules");
  const int n = cfg.clients_cbt + cfg.clients_uc;
  const int S = cfg.n_modules;
  const int G = cfg.n_groups;
  auto [lo, hi] = default_module_bounds(cfg);
  if (cfg.min_per_module > 0) lo = cfg.min_per_module;
  if (cfg.max_per_module > 0) hi = cfg.max_per_module;

  MMDataset ds;
  ds.n_clients = n;
  ds.n_modules = S;
  ds.n_groups = G;
  for (int i = 0; i < n; ++i) ds.client_ids.push_back(i + 1);
  // contiguous groups, sizes as equal as possible (leading groups longer)
  std::vector<int> group_size(G, S / G);
  for (int g = 0; g < S % G; ++g) group_size[g]++;
  for (int g = 0, off = 0; g < G; off += group_size[g], ++g) {
    ds.group_ids.push_back(g + 1);
    ds.group_blocks.emplace_back(off, group_size[g]);
    for (int k = 0; k < group_size[g]; ++k) {
      ds.module_ids.push_back(off + k + 1);
      ds.module_group.push_back(g);
      ds.module_order.push_back(k + 1);
    }
  }
  ds.treatment.assign(n, 0);
  for (int i = 0; i < cfg.clients_cbt; ++i) ds.treatment[i] = 1;

  // Open-enrollment attendance: pre-assign each CBT client to a group and a
  // block window, start uniform within the window, attend attend_count
  // consecutive modules truncated at the group end. Resample starts until
  // every module load falls in [lo, hi].
  std::vector<std::vector<int>> attendance(n);
  bool ok = false;
  for (int attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
    std::vector<int> load(S, 0);
    for (int i = 0; i < cfg.clients_cbt; ++i) {
      attendance[i].clear();
      const int g = G == 1 ? 0 : static_cast<int>(rng.uniform_index(G));
      const auto& [g_begin, g_size] = ds.group_blocks[g];
      const int n_blocks = (g_size + cfg.block_size - 1) / cfg.block_size;
      const int block = static_cast<int>(rng.uniform_index(n_blocks));
      const int w_begin = block * cfg.block_size;
      const int w_end = std::min(w_begin + cfg.block_size, g_size);
      const int start =
          w_begin + static_cast<int>(rng.uniform_index(w_end - w_begin));
      for (int k = 0; k < cfg.attend_count && start + k < g_size; ++k) {
        attendance[i].push_back(g_begin + start + k);
        load[g_begin + start + k]++;
      }
    }
    ok = true;
    for (int s = 0; s < S && ok; ++s) ok = load[s] >= lo && load[s] <= hi;
  }
  if (!ok)
    throw std::runtime_error(
        "simulate: module attendance constraint unsatisfiable after " +
        std::to_string(cfg.max_attempts) + " attempts");
  ds.attendance = attendance;

  SimTruth truth;
  const AdjacencyStructure adj =
      build_adjacency(ds.module_group, ds.module_order);
  truth.cluster_locations = draw_cluster_locations(
      truth.n_clusters, truth.lambda_inv, adj, truth.rho_gen, rng);
  truth.assignment.resize(n);
  for (int i = 0; i < n; ++i)
    truth.assignment[i] = static_cast<int>(rng.uniform_index(truth.n_clusters));

  const Eigen::MatrixXd weights_ddp = build_weights(attendance, S, true);
  const double noise_sd = 1.0 / std::sqrt(truth.tau_eps);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd& delta = truth.cluster_locations[truth.assignment[i]];
    const Eigen::VectorXd theta = delta * weights_ddp.row(i).transpose();
    for (std::size_t w = 0; w < cfg.times.size(); ++w) {
      if (w > 0 && cfg.dropout > 0.0 && rng.uniform() < cfg.dropout) continue;
      const double t = cfg.times[w];
      const double mean = truth.mu +
                          fixef_row(ds.treatment[i], t).tail(kNumFixef).dot(
                              truth.beta) +
                          ranef_row(t).dot(theta);
      ds.observations.push_back(Observation{
          i, t, static_cast<int>(w) + 1, mean + rng.normal(0.0, noise_sd)});
    }
  }
  detail::finalize_dataset(ds);
  return {std::move(ds), std::move(truth)};
}

inline void write_truth(const SimTruth& truth,
                        const std::filesystem::path& path) {
  nlohmann::json j;
  j["mu"] = truth.mu;
  j["tau_eps"] = truth.tau_eps;
  j["rho_gen"] = truth.rho_gen;
  for (int k = 0; k < kNumFixef; ++k) j[kBetaNames[k]] = truth.beta[k];
  j["n_clusters"] = truth.n_clusters;
  std::vector<std::vector<double>> lam;
  for (int r = 0; r < truth.lambda_inv.rows(); ++r) {
    lam.emplace_back();
    for (int c = 0; c < truth.lambda_inv.cols(); ++c)
      lam.back().push_back(truth.lambda_inv(r, c));
  }
  j["lambda_inv"] = lam;
  std::vector<int> assign;
  for (int a : truth.assignment) assign.push_back(a + 1);
  j["assignment"] = assign;
  std::vector<std::vector<std::vector<double>>> locs;
  for (const auto& delta : truth.cluster_locations) {
    locs.emplace_back();
    for (int r = 0; r < delta.rows(); ++r) {
      locs.back().emplace_back();
      for (int c = 0; c < delta.cols(); ++c)
        locs.back().back().push_back(delta(r, c));
    }
  }
  j["cluster_locations"] = locs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline SimTruth read_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  SimTruth truth;
  truth.mu = j.at("mu").get<double>();
  truth.tau_eps = j.at("tau_eps").get<double>();
  truth.rho_gen = j.at("rho_gen").get<double>();
  for (int k = 0; k < kNumFixef; ++k)
    truth.beta[k] = j.at(kBetaNames[k]).get<double>();
  truth.n_clusters = j.at("n_clusters").get<int>();
  const auto lam = j.at("lambda_inv");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      truth.lambda_inv(r, c) = lam.at(r).at(c).get<double>();
  truth.assignment.clear();
  for (const auto& a : j.at("assignment"))
    truth.assignment.push_back(a.get<int>() - 1);
  truth.cluster_locations.clear();
  for (const auto& jl : j.at("cluster_locations")) {
    Eigen::MatrixXd delta(jl.size(), jl.at(0).size());
    for (std::size_t r = 0; r < jl.size(); ++r)
      for (std::size_t c = 0; c < jl.at(r).size(); ++c)
        delta(r, c) = jl.at(r).at(c).get<double>();
    truth.cluster_locations.push_back(delta);
  }
  return truth;
}

inline void write_simulation(const std::filesystem::path& dir,
                             const MMDataset& ds, const SimTruth& truth) {
  write_dataset(dir, ds);
  write_truth(truth, dir / "truth.json");
}

}  // namespace mmgc
