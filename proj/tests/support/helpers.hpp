#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mmgc/data.hpp"
#include "mmgc/numerics.hpp"
#include "mmgc/rng.hpp"

namespace testutil {

struct ToyClient {
  int treatment = 0;
  std::vector<double> times;
  std::vector<double> y;
  std::vector<int> modules;  // 1-based module ids
};

// In-memory dataset with modules 1..S split into G equal contiguous groups.
inline mmgc::MMDataset make_dataset(const std::vector<ToyClient>& clients,
                                    int S, int G) {
  if (G > 0 && S % G != 0)
    throw std::invalid_argument("make_dataset: S must divide into G groups");
  mmgc::MMDataset ds;
  ds.n_clients = static_cast<int>(clients.size());
  ds.n_modules = S;
  ds.n_groups = S == 0 ? 0 : G;
  const int per = G > 0 ? S / G : 0;
  for (int s = 0; s < S; ++s) {
    ds.module_ids.push_back(s + 1);
    ds.module_group.push_back(s / per);
    ds.module_order.push_back(s % per + 1);
  }
  for (int g = 0; g < ds.n_groups; ++g) {
    ds.group_ids.push_back(g + 1);
    ds.group_blocks.emplace_back(g * per, per);
  }
  for (int i = 0; i < ds.n_clients; ++i) {
    ds.client_ids.push_back(i + 1);
    ds.treatment.push_back(clients[i].treatment);
    ds.attendance.emplace_back();
    for (int m : clients[i].modules) ds.attendance.back().push_back(m - 1);
    for (std::size_t j = 0; j < clients[i].times.size(); ++j)
      ds.observations.push_back(mmgc::Observation{
          i, clients[i].times[j], static_cast<int>(j) + 1, clients[i].y[j]});
  }
  mmgc::detail::finalize_dataset(ds);
  return ds;
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

inline Eigen::VectorXd empirical_mean(const std::vector<Eigen::VectorXd>& xs) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

inline Eigen::MatrixXd empirical_cov(const std::vector<Eigen::VectorXd>& xs) {
  const Eigen::VectorXd m = empirical_mean(xs);
  Eigen::MatrixXd c =
      Eigen::MatrixXd::Zero(xs.front().size(), xs.front().size());
  for (const auto& x : xs) {
    const Eigen::VectorXd d = x - m;
    c += d * d.transpose();
  }
  return c / static_cast<double>(xs.size() - 1);
}

// Entrywise check of an empirical covariance against its target within
// k Monte Carlo standard errors (Gaussian fourth-moment approximation).
inline bool cov_within_mcse(const Eigen::MatrixXd& emp,
                            const Eigen::MatrixXd& target, double n_draws,
                            double k) {
  for (Eigen::Index i = 0; i < emp.rows(); ++i)
    for (Eigen::Index j = 0; j < emp.cols(); ++j) {
      const double mcse = std::sqrt(
          (target(i, i) * target(j, j) + target(i, j) * target(i, j)) /
          n_draws);
      if (std::abs(emp(i, j) - target(i, j)) > k * mcse) return false;
    }
  return true;
}

inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const double tol = 1e-10 * es.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (std::abs(es.eigenvalues()[k]) > tol)
      out += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() /
             es.eigenvalues()[k];
  return out;
}

inline Eigen::MatrixXd random_spd(int k, mmgc::RngStream& rng) {
  Eigen::MatrixXd a = mmgc::standard_normal_matrix(k, k, rng);
  return a * a.transpose() + Eigen::MatrixXd::Identity(k, k) * 0.5;
}

inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace testutil
