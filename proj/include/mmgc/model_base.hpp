#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmgc/data.hpp"
#include "mmgc/graph.hpp"
#include "mmgc/numerics.hpp"

namespace mmgc {

enum class ModelKind { mmcar, mmmv, ddp };

inline const char* model_name(ModelKind m) {
  switch (m) {
    case ModelKind::mmcar: return "mmcar";
    case ModelKind::mmmv: return "mmmv";
    case ModelKind::ddp: return "ddp";
  }
  return "?";
}

inline ModelKind model_from_name(const std::string& s) {
  if (s == "mmcar") return ModelKind::mmcar;
  if (s == "mmmv") return ModelKind::mmmv;
  if (s == "ddp") return ModelKind::ddp;
  throw std::invalid_argument("unknown model '" + s + "'");
}

// Fixed-effects design columns, in order.
inline constexpr int kNumFixef = 5;
inline constexpr std::array<const char*, kNumFixef> kBetaNames = {
    "beta_T", "beta_t", "beta_t2", "beta_Tt", "beta_Tt2"};

inline constexpr int kQ = 3;  // polynomial orders: 1, t, t^2

struct FixedEffects {
  double mu = 0.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(kNumFixef);
};

// Per-client views of the design: Z holds the random-effects rows (1, t, t^2)
// and W the intercept-plus-fixed-effects rows (1, T, t, t^2, Tt, Tt^2).
struct ClientBlock {
  int treatment = 0;
  int obs_begin = 0;
  Eigen::MatrixXd Z;    // o_i x q
  Eigen::MatrixXd W;    // o_i x (1 + kNumFixef)
  Eigen::VectorXd y;    // o_i
  Eigen::MatrixXd ZtZ;  // q x q
};

struct ModelData {
  const MMDataset* ds = nullptr;
  int n = 0, N = 0, S = 0, G = 0;
  std::vector<ClientBlock> clients;
  Eigen::VectorXd y;    // N
  Eigen::MatrixXd W;    // N x 6
  Eigen::MatrixXd WtW;  // 6 x 6
  AdjacencyStructure adj;                 // empty when S == 0
  Eigen::MatrixXd sum_obs_xx;             // S x S, sum_i o_i x_i x_i'
  std::vector<Eigen::MatrixXd> sum_xx_ztz;  // S x S grid of q x q blocks
                                            // B(s,s') = sum_i x_is x_is' Z_i'Z_i

  const Eigen::MatrixXd& block_xx_ztz(int s, int t) const {
    return sum_xx_ztz[static_cast<std::size_t>(s) * S + t];
  }
};

inline Eigen::RowVectorXd fixef_row(int treatment, double t) {
  Eigen::RowVectorXd w(1 + kNumFixef);
  const double trt = static_cast<double>(treatment);
  w << 1.0, trt, t, t * t, trt * t, trt * t * t;
  return w;
}

inline Eigen::RowVectorXd ranef_row(double t) {
  Eigen::RowVectorXd z(kQ);
  z << 1.0, t, t * t;
  return z;
}

inline ModelData build_model_data(const MMDataset& ds) {
  ModelData md;
  md.ds = &ds;
  md.n = ds.n_clients;
  md.N = ds.n_obs();
  md.S = ds.n_modules;
  md.G = ds.n_groups;
  md.y.resize(md.N);
  md.W.resize(md.N, 1 + kNumFixef);
  md.clients.resize(md.n);
  for (int i = 0; i < md.n; ++i) {
    const int begin = ds.client_obs_offset[i];
    const int o = ds.obs_count(i);
    ClientBlock& cb = md.clients[i];
    cb.treatment = ds.treatment[i];
    cb.obs_begin = begin;
    cb.Z.resize(o, kQ);
    cb.W.resize(o, 1 + kNumFixef);
    cb.y.resize(o);
    for (int j = 0; j < o; ++j) {
      const Observation& obs = ds.observations[begin + j];
      cb.Z.row(j) = ranef_row(obs.time);
      cb.W.row(j) = fixef_row(cb.treatment, obs.time);
      cb.y[j] = obs.outcome;
      md.y[begin + j] = obs.outcome;
      md.W.row(begin + j) = cb.W.row(j);
    }
    cb.ZtZ = cb.Z.transpose() * cb.Z;
  }
  md.WtW = md.W.transpose() * md.W;

  if (md.S > 0) {
    md.adj = build_adjacency(ds);
    md.sum_obs_xx = Eigen::MatrixXd::Zero(md.S, md.S);
    md.sum_xx_ztz.assign(static_cast<std::size_t>(md.S) * md.S,
                         Eigen::MatrixXd::Zero(kQ, kQ));
    for (int i = 0; i < md.n; ++i) {
      const auto& att = ds.attendance[i];
      if (att.empty()) continue;
      const double o = static_cast<double>(md.clients[i].Z.rows());
      for (int s : att)
        for (int t : att) {
          const double w = ds.weights_add(i, s) * ds.weights_add(i, t);
          md.sum_obs_xx(s, t) += o * w;
          md.sum_xx_ztz[static_cast<std::size_t>(s) * md.S + t] +=
              w * md.clients[i].ZtZ;
        }
    }
  }
  return md;
}

struct GammaParams {
  double shape = 0.0;
  double rate = 0.0;
};

// Noise precision full conditional shared by all models.
inline GammaParams tau_eps_conditional_params(double prior_shape,
                                              double prior_rate, int n_obs,
                                              const Eigen::VectorXd& resid) {
  return {prior_shape + 0.5 * n_obs, prior_rate + 0.5 * resid.squaredNorm()};
}

// Full conditional of (mu, beta) jointly. With the default flat prior the
// posterior precision is tau_eps W'W; residual is the data net of all
// random-effect contributions.
inline PrecisionGaussian fixef_conditional(const ModelData& md,
                                           const Eigen::VectorXd& random_part,
                                           double tau_eps,
                                           double prior_precision) {
  PrecisionGaussian pg;
  pg.precision = tau_eps * md.WtW;
  pg.precision.diagonal().array() += prior_precision;
  pg.shift = tau_eps * (md.W.transpose() * (md.y - random_part));
  return pg;
}

inline void update_fixed_effects(FixedEffects& fe, const ModelData& md,
                                 const Eigen::VectorXd& random_part,
                                 double tau_eps, double prior_precision,
                                 RngStream& rng) {
  const PrecisionGaussian pg =
      fixef_conditional(md, random_part, tau_eps, prior_precision);
  Eigen::LLT<Eigen::MatrixXd> llt(pg.precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(
        "fixed effects crossproduct is singular (collinear design)");
  const Eigen::VectorXd draw = sample_canonical_gaussian(llt, pg.shift, rng);
  fe.mu = draw[0];
  fe.beta = draw.tail(kNumFixef);
}

// Swap in a new outcome vector (keeps designs and weights); used by prior
// predictive tooling.
inline void set_outcomes(ModelData& md, const Eigen::VectorXd& y) {
  if (y.size() != md.N)
    throw std::invalid_argument("set_outcomes: length mismatch");
  md.y = y;
  for (auto& cb : md.clients)
    cb.y = y.segment(cb.obs_begin, cb.Z.rows());
}

inline Eigen::VectorXd fixef_fit(const ModelData& md, const FixedEffects& fe) {
  Eigen::VectorXd coefs(1 + kNumFixef);
  coefs[0] = fe.mu;
  coefs.tail(kNumFixef) = fe.beta;
  return md.W * coefs;
}

}  // namespace mmgc
