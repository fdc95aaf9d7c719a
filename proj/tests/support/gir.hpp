#pragma once

// Successive-conditional simulator ("getting it right"): alternate data
// draws from the likelihood with full Gibbs sweeps. When every update targets
// its exact full conditional, the parameter marginals stay at the prior.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "mmgc/models.hpp"

namespace testutil {

struct GirTraces {
  std::vector<double> tau_eps;
  std::vector<double> mu;
  std::vector<double> beta1;  // first fixed-effect coordinate
};

inline void draw_prior_common(mmgc::FixedEffects& fe, double& tau_eps,
                              Eigen::MatrixXd& lambda, double& alpha,
                              const mmgc::SamplerConfig& cfg,
                              mmgc::RngStream& rng) {
  if (!(cfg.fixef_prior_precision > 0.0))
    throw std::invalid_argument("gir: needs a proper prior on (mu, beta)");
  const double sd = 1.0 / std::sqrt(cfg.fixef_prior_precision);
  fe.mu = rng.normal(0.0, sd);
  for (int k = 0; k < mmgc::kNumFixef; ++k) fe.beta[k] = rng.normal(0.0, sd);
  tau_eps = rng.gamma(cfg.tau_shape, cfg.tau_rate);
  lambda = mmgc::sample_wishart(
      cfg.effective_wishart_df(),
      Eigen::MatrixXd::Identity(mmgc::kQ, mmgc::kQ), rng);
  alpha = rng.gamma(cfg.alpha_shape, cfg.alpha_rate);
}

inline void crp_state(mmgc::dp::ClusterState& clusters, int n, double alpha,
                      mmgc::RngStream& rng) {
  clusters.alpha = alpha;
  clusters.assignment = mmgc::dp::draw_crp_partition(n, alpha, rng);
  int m = 0;
  for (int s : clusters.assignment) m = std::max(m, s + 1);
  clusters.counts.assign(m, 0);
  for (int s : clusters.assignment) clusters.counts[s]++;
  clusters.locations.clear();
}

inline GirTraces run_gir_ddp(mmgc::MMDataset ds, mmgc::SamplerConfig cfg,
                             int cycles, std::uint64_t seed) {
  using namespace mmgc;
  cfg.model = ModelKind::ddp;
  RngStream rng(seed, 0);
  ModelData md = build_model_data(ds);
  const DdpDesign dd = build_ddp_design(md);

  DdpState st = init_ddp(md, cfg);
  draw_prior_common(st.fe, st.tau_eps, st.lambda, st.clusters.alpha, cfg, rng);
  if (md.S > 0) {
    const Eigen::VectorXd grid = rho_grid_values(cfg.rho_grid);
    for (int g = 0; g < md.G; ++g)
      set_rho(st.car, md.adj, g,
              grid[static_cast<int>(rng.uniform_index(grid.size()))]);
    st.rho = st.car.rho;
  }
  crp_state(st.clusters, md.n, st.clusters.alpha, rng);
  const Eigen::MatrixXd p_dense = ddp_p_dense(st, md);
  for (std::size_t m = 0; m < st.clusters.counts.size(); ++m)
    st.clusters.locations.push_back(
        draw_ddp_base_location(st.lambda, p_dense, rng));

  GirTraces out;
  for (int c = 0; c < cycles; ++c) {
    const Eigen::VectorXd fit =
        fixef_fit(md, st.fe) + ddp_random_part(md, st, dd);
    Eigen::VectorXd y(md.N);
    const double sd = 1.0 / std::sqrt(st.tau_eps);
    for (int j = 0; j < md.N; ++j) y[j] = fit[j] + rng.normal(0.0, sd);
    set_outcomes(md, y);
    sweep_ddp(st, md, dd, cfg, rng);
    out.tau_eps.push_back(st.tau_eps);
    out.mu.push_back(st.fe.mu);
    out.beta1.push_back(st.fe.beta[0]);
  }
  return out;
}

inline GirTraces run_gir_mmcar(mmgc::MMDataset ds, mmgc::SamplerConfig cfg,
                               int cycles, std::uint64_t seed) {
  using namespace mmgc;
  cfg.model = ModelKind::mmcar;
  RngStream rng(seed, 0);
  ModelData md = build_model_data(ds);

  MmcarState st = init_mmcar(md, cfg);
  draw_prior_common(st.fe, st.tau_eps, st.lambda, st.clusters.alpha, cfg, rng);
  st.tau_gamma = rng.gamma(cfg.tau_shape, cfg.tau_rate);
  crp_state(st.clusters, md.n, st.clusters.alpha, rng);
  const Eigen::MatrixXd lambda_inv = inverse_spd(st.lambda, "gir base");
  const Eigen::MatrixXd lchol =
      Eigen::LLT<Eigen::MatrixXd>(lambda_inv).matrixL();
  for (std::size_t m = 0; m < st.clusters.counts.size(); ++m)
    st.clusters.locations.push_back(lchol * standard_normals(kQ, rng));
  if (md.S > 0) st.gamma = sample_improper_car(st.car, st.tau_gamma, rng);

  GirTraces out;
  for (int c = 0; c < cycles; ++c) {
    const Eigen::VectorXd fit =
        fixef_fit(md, st.fe) + mmcar_random_part(md, st);
    Eigen::VectorXd y(md.N);
    const double sd = 1.0 / std::sqrt(st.tau_eps);
    for (int j = 0; j < md.N; ++j) y[j] = fit[j] + rng.normal(0.0, sd);
    set_outcomes(md, y);
    sweep_mmcar(st, md, cfg, rng);
    out.tau_eps.push_back(st.tau_eps);
    out.mu.push_back(st.fe.mu);
    out.beta1.push_back(st.fe.beta[0]);
  }
  return out;
}

}  // namespace testutil
