#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mmgc/client_dp.hpp"
#include "mmgc/dp.hpp"
#include "mmgc/graph.hpp"
#include "mmgc/model_base.hpp"
#include "mmgc/sampler.hpp"

namespace mmgc {

// Nonparametric model: each client carries a q x (S+1) matrix of effects
// [b_i, a_1i, ..., a_Si] under a DP prior whose base is matrix normal with
// separable precision Lambda (x) P, P = diag(1, Q_1, ..., Q_G) and
// Q_g = D_g - rho_g Omega_g. Locations are stored row-stacked as q(S+1)
// vectors: entry k(S+1)+s is order k, column s (s = 0 is the intercept b).
struct DdpState {
  FixedEffects fe;
  double tau_eps = 1.0;
  Eigen::MatrixXd lambda;     // q x q
  dp::ClusterState clusters;  // q(S+1) locations
  Eigen::VectorXd rho;        // per group
  CarPrecision car;           // proper, module block of P
};

// Sparse view of each client's DDP weight vector (1, x_i).
struct DdpDesign {
  struct GroupTouch {
    int group = 0;
    std::vector<int> local;   // module offsets within the group block
    std::vector<double> val;  // matching weights
  };
  std::vector<std::vector<int>> nz;       // per client, indices into 0..S
  std::vector<std::vector<double>> nzv;   // matching values (nz[0] is the 1)
  std::vector<std::vector<GroupTouch>> touches;
};

inline DdpDesign build_ddp_design(const ModelData& md) {
  DdpDesign dd;
  dd.nz.resize(md.n);
  dd.nzv.resize(md.n);
  dd.touches.resize(md.n);
  for (int i = 0; i < md.n; ++i) {
    dd.nz[i].push_back(0);
    dd.nzv[i].push_back(1.0);
    for (int s : md.ds->attendance[i]) {
      dd.nz[i].push_back(s + 1);
      dd.nzv[i].push_back(md.ds->weights_ddp(i, s + 1));
    }
    for (int g = 0; g < md.G; ++g) {
      const auto& [begin, size] = md.adj.group_blocks[g];
      DdpDesign::GroupTouch gt;
      gt.group = g;
      for (int s : md.ds->attendance[i])
        if (s >= begin && s < begin + size) {
          gt.local.push_back(s - begin);
          gt.val.push_back(md.ds->weights_ddp(i, s + 1));
        }
      if (!gt.local.empty()) dd.touches[i].push_back(std::move(gt));
    }
  }
  return dd;
}

inline Eigen::VectorXd rho_grid_values(int n_points) {
  Eigen::VectorXd grid(n_points);
  for (int j = 0; j < n_points; ++j)
    grid[j] = -0.99 + 1.98 * static_cast<double>(j) /
                          static_cast<double>(n_points - 1);
  return grid;
}

inline DdpState init_ddp(const ModelData& md, const SamplerConfig& cfg) {
  DdpState st;
  st.fe.mu = md.y.size() ? md.y.mean() : 0.0;
  st.lambda = Eigen::MatrixXd::Identity(kQ, kQ);
  st.clusters.assignment.assign(md.n, 0);
  st.clusters.locations = {Eigen::VectorXd::Zero(kQ * (md.S + 1))};
  st.clusters.counts = {md.n};
  st.clusters.alpha = 1.0;
  if (md.S > 0) {
    const Eigen::VectorXd grid = rho_grid_values(cfg.rho_grid);
    double nearest = grid[0];
    for (int j = 0; j < grid.size(); ++j)
      if (std::abs(grid[j]) < std::abs(nearest)) nearest = grid[j];
    st.rho = Eigen::VectorXd::Constant(md.G, nearest);
    st.car = proper_car_precision(md.adj, st.rho);
  } else {
    st.rho = Eigen::VectorXd(0);
  }
  return st;
}

// Dense P = diag(1, Q).
inline Eigen::MatrixXd ddp_p_dense(const DdpState& st, const ModelData& md) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(md.S + 1, md.S + 1);
  p(0, 0) = 1.0;
  if (md.S > 0) p.block(1, 1, md.S, md.S) = st.car.matrix;
  return p;
}

inline Eigen::VectorXd ddp_theta(const Eigen::VectorXd& loc,
                                 const std::vector<int>& nz,
                                 const std::vector<double>& nzv, int S) {
  Eigen::VectorXd th(kQ);
  for (int k = 0; k < kQ; ++k) {
    double acc = 0.0;
    for (std::size_t a = 0; a < nz.size(); ++a)
      acc += loc[k * (S + 1) + nz[a]] * nzv[a];
    th[k] = acc;
  }
  return th;
}

inline Eigen::MatrixXd ddp_location_matrix(const Eigen::VectorXd& loc, int S) {
  Eigen::MatrixXd delta(kQ, S + 1);
  for (int k = 0; k < kQ; ++k)
    delta.row(k) = loc.segment(k * (S + 1), S + 1).transpose();
  return delta;
}

inline Eigen::VectorXd ddp_flatten(const Eigen::MatrixXd& delta) {
  const int S1 = static_cast<int>(delta.cols());
  Eigen::VectorXd loc(kQ * S1);
  for (int k = 0; k < kQ; ++k)
    loc.segment(k * S1, S1) = delta.row(k).transpose();
  return loc;
}

// Base-distribution draw, used by prior simulation and chain tooling.
inline Eigen::VectorXd draw_ddp_base_location(const Eigen::MatrixXd& lambda,
                                              const Eigen::MatrixXd& p_dense,
                                              RngStream& rng) {
  return ddp_flatten(sample_matrix_normal_kron(lambda, p_dense, rng));
}

inline Eigen::VectorXd ddp_random_part(const ModelData& md,
                                       const DdpState& st,
                                       const DdpDesign& dd) {
  Eigen::VectorXd out(md.N);
  for (int i = 0; i < md.n; ++i) {
    const ClientBlock& cb = md.clients[i];
    const Eigen::VectorXd th =
        ddp_theta(st.clusters.locations[st.clusters.assignment[i]], dd.nz[i],
                  dd.nzv[i], md.S);
    out.segment(cb.obs_begin, cb.Z.rows()) = cb.Z * th;
  }
  return out;
}

// Lambda (x) P in the row-stacked layout.
inline Eigen::MatrixXd ddp_base_precision(const DdpState& st,
                                          const ModelData& md) {
  const int S = md.S;
  const Eigen::MatrixXd p_dense = ddp_p_dense(st, md);
  Eigen::MatrixXd base(kQ * (S + 1), kQ * (S + 1));
  for (int k = 0; k < kQ; ++k)
    for (int l = 0; l < kQ; ++l)
      base.block(k * (S + 1), l * (S + 1), S + 1, S + 1) =
          st.lambda(k, l) * p_dense;
  return base;
}

// Adds tau_eps C_i'C_i = tau_eps (Z_i'Z_i) (x) (x_i x_i') and the matching
// shift through the sparse weight pattern.
inline void ddp_add_client_information(Eigen::MatrixXd& prec,
                                       Eigen::VectorXd& shift,
                                       const DdpState& st, const ModelData& md,
                                       const DdpDesign& dd,
                                       const Eigen::VectorXd& ytilde_i, int i) {
  const int S = md.S;
  const ClientBlock& cb = md.clients[i];
  const auto& nz = dd.nz[i];
  const auto& nzv = dd.nzv[i];
  const Eigen::VectorXd zty = st.tau_eps * (cb.Z.transpose() * ytilde_i);
  const Eigen::MatrixXd ztz = st.tau_eps * cb.ZtZ;
  for (std::size_t a = 0; a < nz.size(); ++a) {
    for (std::size_t b = 0; b < nz.size(); ++b) {
      const double w = nzv[a] * nzv[b];
      for (int k = 0; k < kQ; ++k)
        for (int l = 0; l < kQ; ++l)
          prec(k * (S + 1) + nz[a], l * (S + 1) + nz[b]) += ztz(k, l) * w;
    }
    for (int k = 0; k < kQ; ++k)
      shift[k * (S + 1) + nz[a]] += zty[k] * nzv[a];
  }
}

// Conjugate location full conditional for a cluster given its members:
// precision Lambda (x) P + tau_eps sum C'C.
inline PrecisionGaussian ddp_location_conditional(
    const DdpState& st, const ModelData& md, const DdpDesign& dd,
    const std::vector<Eigen::VectorXd>& ytilde,
    const std::vector<int>& members) {
  PrecisionGaussian pg;
  pg.precision = ddp_base_precision(st, md);
  pg.shift = Eigen::VectorXd::Zero(kQ * (md.S + 1));
  for (int i : members)
    ddp_add_client_information(pg.precision, pg.shift, st, md, dd, ytilde[i],
                               i);
  return pg;
}

// x_i' P^{-1} x_i through the per-group Cholesky factors of Q_g.
inline double ddp_client_scale(
    const DdpState& st, const ModelData& md, const DdpDesign& dd, int i,
    const std::vector<Eigen::LLT<Eigen::MatrixXd>>& block_llt) {
  double scale = 1.0;
  for (const auto& gt : dd.touches[i]) {
    const int size = md.adj.group_blocks[gt.group].second;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
    for (std::size_t a = 0; a < gt.local.size(); ++a) v[gt.local[a]] = gt.val[a];
    scale += v.dot(block_llt[gt.group].solve(v));
  }
  return scale;
}

inline std::vector<Eigen::LLT<Eigen::MatrixXd>> ddp_block_factors(
    const DdpState& st, const ModelData& md) {
  std::vector<Eigen::LLT<Eigen::MatrixXd>> block_llt;
  for (int g = 0; g < md.G; ++g) {
    const auto& [begin, size] = md.adj.group_blocks[g];
    block_llt.emplace_back(
        cholesky_spd(st.car.matrix.block(begin, begin, size, size),
                     "proper CAR block"));
  }
  return block_llt;
}

// Polya-urn pass over clients plus joint location refresh. The new-cluster
// weight integrates the q(S+1) location against the separable base in
// observation space: with c_ij = z_ij (x) x_i and shared x_i within client,
//   C_i [Lambda (x) P]^{-1} C_i' = (x_i' P^{-1} x_i) Z_i Lambda^{-1} Z_i',
// an o_i-dimensional Gaussian convolution.
inline void update_clusters_ddp(DdpState& st, const ModelData& md,
                                const DdpDesign& dd,
                                const std::vector<Eigen::VectorXd>& ytilde,
                                RngStream& rng) {
  const int S = md.S;
  const int dim = kQ * (S + 1);
  const Eigen::MatrixXd lambda_inv = inverse_spd(st.lambda, "client base");

  const auto block_llt = ddp_block_factors(st, md);
  std::vector<double> scale(md.n, 1.0);
  for (int i = 0; i < md.n; ++i)
    scale[i] = ddp_client_scale(st, md, dd, i, block_llt);

  const Eigen::MatrixXd base_prec = ddp_base_precision(st, md);

  auto log_lik = [&](int i, const Eigen::VectorXd& loc) {
    const ClientBlock& cb = md.clients[i];
    const Eigen::VectorXd theta = ddp_theta(loc, dd.nz[i], dd.nzv[i], S);
    const Eigen::VectorXd resid = ytilde[i] - cb.Z * theta;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < resid.size(); ++j)
      acc += log_normal_pdf(resid[j], st.tau_eps);
    return acc;
  };
  auto log_marginal = [&](int i) {
    return log_convolved_marginal(ytilde[i], md.clients[i].Z, lambda_inv,
                                  scale[i], st.tau_eps);
  };
  auto draw_location = [&](int i) {
    PrecisionGaussian pg;
    pg.precision = base_prec;
    pg.shift = Eigen::VectorXd::Zero(dim);
    ddp_add_client_information(pg.precision, pg.shift, st, md, dd, ytilde[i],
                               i);
    return sample_canonical_gaussian(pg, rng);
  };
  dp::urn_sweep(st.clusters, log_lik, log_marginal, draw_location, rng);

  auto posterior = [&](const std::vector<int>& members) {
    PrecisionGaussian pg;
    pg.precision = base_prec;
    pg.shift = Eigen::VectorXd::Zero(dim);
    for (int i : members)
      ddp_add_client_information(pg.precision, pg.shift, st, md, dd, ytilde[i],
                                 i);
    return pg;
  };
  dp::resample_locations(st.clusters, posterior, rng);
}

// Wishart full conditional for the separable base: df nu0 + M(S+1),
// scale (I + sum_m Delta_m P Delta_m')^{-1}.
inline std::pair<double, Eigen::MatrixXd> lambda_conditional_ddp(
    const SamplerConfig& cfg, const DdpState& st, const ModelData& md) {
  const Eigen::MatrixXd p_dense = ddp_p_dense(st, md);
  Eigen::MatrixXd scale_inv = Eigen::MatrixXd::Identity(kQ, kQ);
  for (const auto& loc : st.clusters.locations) {
    const Eigen::MatrixXd delta = ddp_location_matrix(loc, md.S);
    scale_inv += delta * p_dense * delta.transpose();
  }
  const double df = cfg.effective_wishart_df() +
                    static_cast<double>(st.clusters.n_clusters()) * (md.S + 1);
  return {df, inverse_spd(scale_inv, "lambda scale")};
}

inline void update_precisions_ddp(DdpState& st, const ModelData& md,
                                  const Eigen::VectorXd& resid,
                                  const SamplerConfig& cfg, RngStream& rng) {
  const GammaParams te =
      tau_eps_conditional_params(cfg.tau_shape, cfg.tau_rate, md.N, resid);
  st.tau_eps = rng.gamma(te.shape, te.rate);
  const auto [df, scale] = lambda_conditional_ddp(cfg, st, md);
  st.lambda = sample_wishart(df, scale, rng);
}

// Quadratic-form pieces of the rho full conditional for group g:
// sum_m tr(Lambda A_{m,g} Q_g(rho) A_{m,g}') = trace_d - rho * trace_omega.
inline std::pair<double, double> rho_trace_terms(const DdpState& st,
                                                 const ModelData& md, int g) {
  const auto& [begin, size] = md.adj.group_blocks[g];
  const Eigen::MatrixXd omega_g = md.adj.omega.block(begin, begin, size, size);
  const Eigen::VectorXd deg_g = md.adj.degree.segment(begin, size);
  double trace_d = 0.0, trace_omega = 0.0;
  for (const auto& loc : st.clusters.locations) {
    Eigen::MatrixXd a_g(kQ, size);
    for (int k = 0; k < kQ; ++k)
      a_g.row(k) = loc.segment(k * (md.S + 1) + 1 + begin, size).transpose();
    trace_d +=
        (st.lambda * (a_g * deg_g.asDiagonal() * a_g.transpose())).trace();
    trace_omega += (st.lambda * (a_g * omega_g * a_g.transpose())).trace();
  }
  return {trace_d, trace_omega};
}

// Griddy Gibbs for each group's smoothing parameter on a uniform grid over
// (-0.99, 0.99): log-weight (Mq/2) log|Q_g(rho)| - tr(Lambda A Q_g(rho) A')/2
// evaluated from cached spectra.
inline void update_rho_ddp(DdpState& st, const ModelData& md,
                           const SamplerConfig& cfg, RngStream& rng) {
  const Eigen::VectorXd grid = rho_grid_values(cfg.rho_grid);
  const int m_live = st.clusters.n_clusters();
  for (int g = 0; g < md.G; ++g) {
    const auto [trace_d, trace_omega] = rho_trace_terms(st, md, g);
    std::vector<double> logw(grid.size());
    for (int j = 0; j < grid.size(); ++j)
      logw[j] = 0.5 * m_live * kQ * st.car.log_det_group(g, grid[j]) -
                0.5 * (trace_d - grid[j] * trace_omega);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logw) mx = std::max(mx, v);
    if (!std::isfinite(mx))
      throw std::runtime_error("rho update: all grid weights vanish");
    std::vector<double> w(logw.size());
    for (std::size_t j = 0; j < logw.size(); ++j) w[j] = std::exp(logw[j] - mx);
    const int pick = static_cast<int>(rng.categorical(w));
    set_rho(st.car, md.adj, g, grid[pick]);
    st.rho[g] = grid[pick];
  }
}

inline void sweep_ddp(DdpState& st, const ModelData& md, const DdpDesign& dd,
                      const SamplerConfig& cfg, RngStream& rng) {
  update_fixed_effects(st.fe, md, ddp_random_part(md, st, dd), st.tau_eps,
                       cfg.fixef_prior_precision, rng);
  const Eigen::VectorXd fixed = fixef_fit(md, st.fe);

  {
    std::vector<Eigen::VectorXd> ytilde(md.n);
    const Eigen::VectorXd net = md.y - fixed;
    for (int i = 0; i < md.n; ++i)
      ytilde[i] = net.segment(md.clients[i].obs_begin, md.clients[i].Z.rows());
    update_clusters_ddp(st, md, dd, ytilde, rng);
  }

  const Eigen::VectorXd resid = md.y - fixed - ddp_random_part(md, st, dd);
  update_precisions_ddp(st, md, resid, cfg, rng);
  if (md.S > 0) update_rho_ddp(st, md, cfg, rng);
  st.clusters.alpha =
      dp::update_alpha(st.clusters.n_clusters(), md.n, st.clusters.alpha,
                       cfg.alpha_shape, cfg.alpha_rate, rng);
}

}  // namespace mmgc
