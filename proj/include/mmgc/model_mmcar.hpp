#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmgc/client_dp.hpp"
#include "mmgc/dp.hpp"
#include "mmgc/graph.hpp"
#include "mmgc/model_base.hpp"
#include "mmgc/sampler.hpp"

namespace mmgc {

// Additive model with univariate module effects under the improper CAR prior
// and a DP prior on client effects.
struct MmcarState {
  FixedEffects fe;
  double tau_eps = 1.0;
  double tau_gamma = 1.0;
  Eigen::MatrixXd lambda;     // q x q base precision for b
  dp::ClusterState clusters;  // locations are q-vectors b*
  Eigen::VectorXd gamma;      // S module effects, per-group sums zero
  CarPrecision car;           // improper D - Omega with cached spectra
  Eigen::MatrixXd basis;      // S x (S-G) sum-to-zero basis
};

inline MmcarState init_mmcar(const ModelData& md, const SamplerConfig&) {
  MmcarState st;
  st.fe.mu = md.y.size() ? md.y.mean() : 0.0;
  st.lambda = Eigen::MatrixXd::Identity(kQ, kQ);
  st.clusters.assignment.assign(md.n, 0);
  st.clusters.locations = {Eigen::VectorXd::Zero(kQ)};
  st.clusters.counts = {md.n};
  st.clusters.alpha = 1.0;
  st.gamma = Eigen::VectorXd::Zero(md.S);
  if (md.S > 0) {
    st.car = improper_car_precision(md.adj);
    st.basis = sum_zero_basis(md.adj);
  }
  return st;
}

// Per-observation x_i' gamma.
inline Eigen::VectorXd mmcar_module_part(const ModelData& md,
                                         const Eigen::VectorXd& gamma) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(md.N);
  if (md.S == 0) return out;
  for (int i = 0; i < md.n; ++i) {
    const auto& att = md.ds->attendance[i];
    if (att.empty()) continue;
    double dot = 0.0;
    for (int s : att) dot += md.ds->weights_add(i, s) * gamma[s];
    out.segment(md.clients[i].obs_begin, md.clients[i].Z.rows()).array() += dot;
  }
  return out;
}

// Full conditional of gamma: precision tau_gamma (D - Omega) +
// tau_eps sum_ij x_i x_i', shift tau_eps sum_ij x_i r_ij.
inline PrecisionGaussian mmcar_gamma_conditional(
    const MmcarState& st, const ModelData& md,
    const Eigen::VectorXd& resid_wo_modules) {
  PrecisionGaussian pg;
  pg.precision = st.tau_gamma * st.car.matrix;
  pg.precision += st.tau_eps * md.sum_obs_xx;
  pg.shift = Eigen::VectorXd::Zero(md.S);
  for (int i = 0; i < md.n; ++i) {
    const auto& att = md.ds->attendance[i];
    if (att.empty()) continue;
    const double rsum =
        resid_wo_modules.segment(md.clients[i].obs_begin, md.clients[i].Z.rows())
            .sum();
    for (int s : att) pg.shift[s] += md.ds->weights_add(i, s) * rsum;
  }
  pg.shift *= st.tau_eps;
  return pg;
}

// Joint draw of gamma restricted to the per-group sum-to-zero subspace. A
// group-level mean of gamma is confounded with the treatment fixed effect, so
// identification lives on the subspace; sampling in basis coordinates keeps
// the transition exact where a draw-then-recentre projection is not.
inline void update_module_effects_mmcar(MmcarState& st, const ModelData& md,
                                        const Eigen::VectorXd& resid_wo_modules,
                                        RngStream& rng) {
  const PrecisionGaussian pg =
      mmcar_gamma_conditional(st, md, resid_wo_modules);
  const PrecisionGaussian constrained{
      st.basis.transpose() * pg.precision * st.basis,
      st.basis.transpose() * pg.shift};
  st.gamma = st.basis * sample_canonical_gaussian(constrained, rng);
}

// Shape uses the improper prior's rank S - G, not S.
inline GammaParams tau_gamma_conditional(const SamplerConfig& cfg,
                                         const MmcarState& st) {
  return {cfg.tau_shape + 0.5 * st.car.rank,
          cfg.tau_rate + 0.5 * st.gamma.dot(st.car.matrix * st.gamma)};
}

// Wishart full conditional (df, scale) for the DP base precision over b*.
inline std::pair<double, Eigen::MatrixXd> lambda_conditional_mmcar(
    const SamplerConfig& cfg, const dp::ClusterState& clusters) {
  Eigen::MatrixXd scale_inv = Eigen::MatrixXd::Identity(kQ, kQ);
  for (const auto& loc : clusters.locations)
    scale_inv += loc * loc.transpose();
  return {cfg.effective_wishart_df() + clusters.n_clusters(),
          inverse_spd(scale_inv, "lambda scale")};
}

inline void update_precisions_mmcar(MmcarState& st, const ModelData& md,
                                    const Eigen::VectorXd& resid,
                                    const SamplerConfig& cfg, RngStream& rng) {
  const GammaParams te =
      tau_eps_conditional_params(cfg.tau_shape, cfg.tau_rate, md.N, resid);
  st.tau_eps = rng.gamma(te.shape, te.rate);
  if (md.S > 0) {
    const GammaParams tg = tau_gamma_conditional(cfg, st);
    st.tau_gamma = rng.gamma(tg.shape, tg.rate);
  }
  const auto [df, scale] = lambda_conditional_mmcar(cfg, st.clusters);
  st.lambda = sample_wishart(df, scale, rng);
}

inline Eigen::VectorXd mmcar_random_part(const ModelData& md,
                                         const MmcarState& st) {
  return client_effect_part(md, st.clusters) +
         mmcar_module_part(md, st.gamma);
}

inline void sweep_mmcar(MmcarState& st, const ModelData& md,
                        const SamplerConfig& cfg, RngStream& rng) {
  update_fixed_effects(st.fe, md, mmcar_random_part(md, st), st.tau_eps,
                       cfg.fixef_prior_precision, rng);
  const Eigen::VectorXd fixed = fixef_fit(md, st.fe);

  {
    const Eigen::VectorXd net = md.y - fixed - mmcar_module_part(md, st.gamma);
    std::vector<Eigen::VectorXd> ytilde(md.n);
    for (int i = 0; i < md.n; ++i)
      ytilde[i] = net.segment(md.clients[i].obs_begin, md.clients[i].Z.rows());
    update_clients_dp(st.clusters, md, ytilde, st.lambda, st.tau_eps, rng);
  }

  if (md.S > 0) {
    const Eigen::VectorXd resid_wo_modules =
        md.y - fixed - client_effect_part(md, st.clusters);
    update_module_effects_mmcar(st, md, resid_wo_modules, rng);
  }

  const Eigen::VectorXd resid = md.y - fixed - mmcar_random_part(md, st);
  update_precisions_mmcar(st, md, resid, cfg, rng);
  st.clusters.alpha =
      dp::update_alpha(st.clusters.n_clusters(), md.n, st.clusters.alpha,
                       cfg.alpha_shape, cfg.alpha_rate, rng);
}

}  // namespace mmgc
