#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mmgc/numerics.hpp"

namespace mmgc {

// Model-comparison statistics over stored per-observation log-likelihood
// draws (rows = draws, columns = observations).
struct FitReport {
  double d_bar = 0.0;     // mean deviance
  double neg_lpml = 0.0;  // -sum_i log CPO_i
  double dic3 = 0.0;      // d_bar + pD, pD = d_bar + 2 log fhat(y)
  Eigen::VectorXd per_obs_cpo;
  int n_draws = 0;
};

namespace detail {

inline void check_loglik(const Eigen::MatrixXd& loglik) {
  if (loglik.rows() < 1)
    throw std::invalid_argument("fit statistics need at least one draw");
  for (Eigen::Index j = 0; j < loglik.cols(); ++j)
    for (Eigen::Index t = 0; t < loglik.rows(); ++t)
      if (!std::isfinite(loglik(t, j)))
        throw std::runtime_error(
            "non-finite log-likelihood for observation " +
            std::to_string(j + 1));
}

inline double column_log_sum_exp(const Eigen::VectorXd& col) {
  const double mx = col.maxCoeff();
  return mx + std::log((col.array() - mx).exp().sum());
}

}  // namespace detail

// CPO_i is the harmonic mean of the per-draw likelihoods, evaluated in log
// space: log CPO_i = log T - logsumexp_t(-l_ti).
inline std::pair<double, Eigen::VectorXd> compute_lpml(
    const Eigen::MatrixXd& loglik) {
  detail::check_loglik(loglik);
  const double log_t = std::log(static_cast<double>(loglik.rows()));
  Eigen::VectorXd cpo(loglik.cols());
  double lpml = 0.0;
  for (Eigen::Index j = 0; j < loglik.cols(); ++j) {
    const double log_cpo =
        log_t - detail::column_log_sum_exp(-loglik.col(j));
    cpo[j] = std::exp(log_cpo);
    lpml += log_cpo;
  }
  return {-lpml, cpo};
}

// D_bar = mean_t(-2 sum_i l_ti); log fhat(y) = sum_i [logsumexp_t l_ti -
// log T]; DIC3 = 2 D_bar + 2 log fhat(y).
inline std::pair<double, double> compute_dic3(const Eigen::MatrixXd& loglik) {
  detail::check_loglik(loglik);
  const double log_t = std::log(static_cast<double>(loglik.rows()));
  const double d_bar = -2.0 * loglik.rowwise().sum().mean();
  double log_fhat = 0.0;
  for (Eigen::Index j = 0; j < loglik.cols(); ++j)
    log_fhat += detail::column_log_sum_exp(loglik.col(j)) - log_t;
  const double dic3 = 2.0 * d_bar + 2.0 * log_fhat;
  return {d_bar, dic3};
}

inline FitReport fit_report(const Eigen::MatrixXd& loglik) {
  FitReport r;
  auto [neg_lpml, cpo] = compute_lpml(loglik);
  auto [d_bar, dic3] = compute_dic3(loglik);
  r.neg_lpml = neg_lpml;
  r.per_obs_cpo = cpo;
  r.d_bar = d_bar;
  r.dic3 = dic3;
  r.n_draws = static_cast<int>(loglik.rows());
  return r;
}

inline void write_fit_report(const FitReport& r,
                             const std::filesystem::path& path) {
  nlohmann::json j{{"d_bar", r.d_bar},
                   {"neg_lpml", r.neg_lpml},
                   {"dic3", r.dic3},
                   {"n_draws", r.n_draws}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace mmgc
