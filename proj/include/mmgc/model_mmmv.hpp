#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmgc/client_dp.hpp"
#include "mmgc/dp.hpp"
#include "mmgc/graph.hpp"
#include "mmgc/model_base.hpp"
#include "mmgc/sampler.hpp"

namespace mmgc {

// Additive model with time-varying module effects: each module carries a
// q-vector of polynomial effects under the multivariate improper CAR prior
// (D - Omega) (x) Lambda, with Lambda shared with the client-effect base.
struct MmMvState {
  FixedEffects fe;
  double tau_eps = 1.0;
  Eigen::MatrixXd lambda;     // q x q
  dp::ClusterState clusters;  // q-vector locations b*
  Eigen::MatrixXd gamma;      // S x q, per-group per-order sums zero
  CarPrecision car;           // improper D - Omega
  Eigen::MatrixXd basis;      // Sq x (S-G)q stacked sum-to-zero basis
};

inline MmMvState init_mmmv(const ModelData& md, const SamplerConfig&) {
  MmMvState st;
  st.fe.mu = md.y.size() ? md.y.mean() : 0.0;
  st.lambda = Eigen::MatrixXd::Identity(kQ, kQ);
  st.clusters.assignment.assign(md.n, 0);
  st.clusters.locations = {Eigen::VectorXd::Zero(kQ)};
  st.clusters.counts = {md.n};
  st.clusters.alpha = 1.0;
  st.gamma = Eigen::MatrixXd::Zero(md.S, kQ);
  if (md.S > 0) {
    st.car = improper_car_precision(md.adj);
    st.basis = kronecker(sum_zero_basis(md.adj),
                         Eigen::MatrixXd::Identity(kQ, kQ));
  }
  return st;
}

// Per-observation (x_i' Gamma) z_ij.
inline Eigen::VectorXd mmmv_module_part(const ModelData& md,
                                        const Eigen::MatrixXd& gamma) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(md.N);
  if (md.S == 0) return out;
  for (int i = 0; i < md.n; ++i) {
    const auto& att = md.ds->attendance[i];
    if (att.empty()) continue;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(kQ);
    for (int s : att) v += md.ds->weights_add(i, s) * gamma.row(s).transpose();
    const ClientBlock& cb = md.clients[i];
    out.segment(cb.obs_begin, cb.Z.rows()) = cb.Z * v;
  }
  return out;
}

// Full conditional of the stacked qS-vector of module effects. Coordinates
// are module-major: block s holds the q orders of module s, so the prior
// precision block (s,t) is (D - Omega)_{st} Lambda and the likelihood block
// is tau_eps sum_i x_is x_it Z_i'Z_i.
inline PrecisionGaussian mmmv_gamma_conditional(
    const MmMvState& st, const ModelData& md,
    const Eigen::VectorXd& resid_wo_modules) {
  const int S = md.S;
  PrecisionGaussian pg;
  pg.precision.resize(S * kQ, S * kQ);
  for (int s = 0; s < S; ++s)
    for (int t = 0; t < S; ++t)
      pg.precision.block(s * kQ, t * kQ, kQ, kQ) =
          st.car.matrix(s, t) * st.lambda +
          st.tau_eps * md.block_xx_ztz(s, t);
  pg.shift = Eigen::VectorXd::Zero(S * kQ);
  for (int i = 0; i < md.n; ++i) {
    const auto& att = md.ds->attendance[i];
    if (att.empty()) continue;
    const ClientBlock& cb = md.clients[i];
    const Eigen::VectorXd ztr =
        cb.Z.transpose() *
        resid_wo_modules.segment(cb.obs_begin, cb.Z.rows());
    for (int s : att)
      pg.shift.segment(s * kQ, kQ) += md.ds->weights_add(i, s) * ztr;
  }
  pg.shift *= st.tau_eps;
  return pg;
}

// Joint draw restricted to the per-group, per-order sum-to-zero subspace
// (exact counterpart of the univariate constrained draw).
inline void update_module_effects_mmmv(MmMvState& st, const ModelData& md,
                                       const Eigen::VectorXd& resid_wo_modules,
                                       RngStream& rng) {
  const PrecisionGaussian pg =
      mmmv_gamma_conditional(st, md, resid_wo_modules);
  const PrecisionGaussian constrained{
      st.basis.transpose() * pg.precision * st.basis,
      st.basis.transpose() * pg.shift};
  const Eigen::VectorXd draw =
      st.basis * sample_canonical_gaussian(constrained, rng);
  for (int s = 0; s < md.S; ++s)
    st.gamma.row(s) = draw.segment(s * kQ, kQ).transpose();
}

// Lambda appears in the client base and in the CAR prior on Gamma; the
// improper prior contributes rank S - G degrees of freedom.
inline std::pair<double, Eigen::MatrixXd> lambda_conditional_mmmv(
    const SamplerConfig& cfg, const MmMvState& st, const ModelData& md) {
  Eigen::MatrixXd scale_inv = Eigen::MatrixXd::Identity(kQ, kQ);
  for (const auto& loc : st.clusters.locations)
    scale_inv += loc * loc.transpose();
  double df = cfg.effective_wishart_df() + st.clusters.n_clusters();
  if (md.S > 0) {
    scale_inv += st.gamma.transpose() * st.car.matrix * st.gamma;
    df += st.car.rank;
  }
  return {df, inverse_spd(scale_inv, "lambda scale")};
}

inline void update_precisions_mmmv(MmMvState& st, const ModelData& md,
                                   const Eigen::VectorXd& resid,
                                   const SamplerConfig& cfg, RngStream& rng) {
  const GammaParams te =
      tau_eps_conditional_params(cfg.tau_shape, cfg.tau_rate, md.N, resid);
  st.tau_eps = rng.gamma(te.shape, te.rate);
  const auto [df, scale] = lambda_conditional_mmmv(cfg, st, md);
  st.lambda = sample_wishart(df, scale, rng);
}

inline Eigen::VectorXd mmmv_random_part(const ModelData& md,
                                        const MmMvState& st) {
  return client_effect_part(md, st.clusters) + mmmv_module_part(md, st.gamma);
}

inline void sweep_mmmv(MmMvState& st, const ModelData& md,
                       const SamplerConfig& cfg, RngStream& rng) {
  update_fixed_effects(st.fe, md, mmmv_random_part(md, st), st.tau_eps,
                       cfg.fixef_prior_precision, rng);
  const Eigen::VectorXd fixed = fixef_fit(md, st.fe);

  {
    const Eigen::VectorXd net = md.y - fixed - mmmv_module_part(md, st.gamma);
    std::vector<Eigen::VectorXd> ytilde(md.n);
    for (int i = 0; i < md.n; ++i)
      ytilde[i] = net.segment(md.clients[i].obs_begin, md.clients[i].Z.rows());
    update_clients_dp(st.clusters, md, ytilde, st.lambda, st.tau_eps, rng);
  }

  if (md.S > 0) {
    const Eigen::VectorXd resid_wo_modules =
        md.y - fixed - client_effect_part(md, st.clusters);
    update_module_effects_mmmv(st, md, resid_wo_modules, rng);
  }

  const Eigen::VectorXd resid = md.y - fixed - mmmv_random_part(md, st);
  update_precisions_mmmv(st, md, resid, cfg, rng);
  st.clusters.alpha =
      dp::update_alpha(st.clusters.n_clusters(), md.n, st.clusters.alpha,
                       cfg.alpha_shape, cfg.alpha_rate, rng);
}

}  // namespace mmgc
