#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mmgc/graph.hpp"
#include "mmgc/rng.hpp"

namespace mmgc {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

// Canonical-form Gaussian: density proportional to exp(-x'Px/2 + h'x).
// Mean P^{-1}h, covariance P^{-1}.
struct PrecisionGaussian {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;
};

inline Eigen::VectorXd standard_normals(Eigen::Index k, RngStream& rng) {
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = rng.normal();
  return z;
}

inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index r, Eigen::Index c,
                                              RngStream& rng) {
  Eigen::MatrixXd z(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) z(i, j) = rng.normal();
  return z;
}

inline Eigen::LLT<Eigen::MatrixXd> cholesky_spd(const Eigen::MatrixXd& m,
                                                const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(std::string(what) +
                             ": matrix is not positive definite");
  return llt;
}

inline Eigen::VectorXd sample_canonical_gaussian(
    const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& shift,
    RngStream& rng) {
  const Eigen::VectorXd mean = llt.solve(shift);
  const Eigen::VectorXd z = standard_normals(shift.size(), rng);
  // L' u = z gives Cov[u] = P^{-1}.
  return mean + llt.matrixU().solve(z);
}

inline Eigen::VectorXd sample_canonical_gaussian(const PrecisionGaussian& g,
                                                 RngStream& rng) {
  const auto llt = cholesky_spd(g.precision, "sample_canonical_gaussian");
  return sample_canonical_gaussian(llt, g.shift, rng);
}

// Draw a q x p matrix A with Cov[A_ks, A_k's'] = (row_prec^{-1})_kk' *
// (col_prec^{-1})_ss', i.e. the row-stacked vectorization has covariance
// row_prec^{-1} (x) col_prec^{-1}. Two triangular solves; the Kronecker
// product is never formed.
inline Eigen::MatrixXd sample_matrix_normal_kron(
    const Eigen::MatrixXd& row_prec, const Eigen::MatrixXd& col_prec,
    RngStream& rng) {
  const auto lr = cholesky_spd(row_prec, "sample_matrix_normal_kron(row)");
  const auto lc = cholesky_spd(col_prec, "sample_matrix_normal_kron(col)");
  Eigen::MatrixXd e =
      standard_normal_matrix(row_prec.rows(), col_prec.rows(), rng);
  const Eigen::MatrixXd a1 = lr.matrixU().solve(e);
  return lc.matrixU().solve(a1.transpose()).transpose();
}

// Bartlett construction; mean df * scale.
inline Eigen::MatrixXd sample_wishart(double df, const Eigen::MatrixXd& scale,
                                      RngStream& rng) {
  const Eigen::Index d = scale.rows();
  if (df < static_cast<double>(d))
    throw std::domain_error("sample_wishart: df must be >= dimension");
  const auto llt = cholesky_spd(scale, "sample_wishart");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

// Draw from the rank-deficient CAR prior N(0, [tau (D - Omega)]^-): normals
// scaled by 1/sqrt(tau lambda_k) along eigenvectors with nonzero eigenvalue,
// nothing along the per-group null directions. Group sums come out zero; a
// final recentering clears rounding residue.
inline Eigen::VectorXd sample_improper_car(const CarPrecision& car, double tau,
                                           RngStream& rng) {
  if (car.kind != CarPrecision::Kind::improper)
    throw std::logic_error("sample_improper_car: need improper precision");
  Eigen::VectorXd draw = Eigen::VectorXd::Zero(car.matrix.rows());
  double max_eig = 0.0;
  for (const auto& ev : car.block_eigenvalues)
    max_eig = std::max(max_eig, ev.size() ? ev.maxCoeff() : 0.0);
  const double tol = 1e-8 * max_eig;
  for (std::size_t g = 0; g < car.group_blocks.size(); ++g) {
    const auto& [begin, size] = car.group_blocks[g];
    const auto& vals = car.block_eigenvalues[g];
    const auto& vecs = car.block_eigenvectors[g];
    Eigen::VectorXd seg = Eigen::VectorXd::Zero(size);
    for (int k = 0; k < vals.size(); ++k) {
      if (vals[k] <= tol) continue;
      seg += vecs.col(k) * (rng.normal() / std::sqrt(tau * vals[k]));
    }
    seg.array() -= seg.mean();
    draw.segment(begin, size) = seg;
  }
  return draw;
}

inline Eigen::VectorXd sample_improper_car(const AdjacencyStructure& adj,
                                           double tau, RngStream& rng) {
  return sample_improper_car(improper_car_precision(adj), tau, rng);
}

inline double log_normal_pdf(double resid, double tau) {
  return 0.5 * (std::log(tau) - kLogTwoPi - tau * resid * resid);
}

// log N(r; 0, V) for small dense V.
inline double log_mvn_zero_mean(const Eigen::VectorXd& r,
                                const Eigen::MatrixXd& cov) {
  const auto llt = cholesky_spd(cov, "log_mvn_zero_mean");
  double log_det = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += std::log(l(i, i));
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  return -0.5 * (static_cast<double>(r.size()) * kLogTwoPi + w.squaredNorm()) -
         log_det;
}

// log N(r; 0, tau_eps^{-1} I + scale * Z lambda_inv Z'): the observation-space
// marginal of a Gaussian effect integrated against its Gaussian base.
inline double log_convolved_marginal(const Eigen::VectorXd& r,
                                     const Eigen::MatrixXd& z,
                                     const Eigen::MatrixXd& lambda_inv,
                                     double scale, double tau_eps) {
  const Eigen::Index o = r.size();
  Eigen::MatrixXd v = scale * (z * lambda_inv * z.transpose());
  v.diagonal().array() += 1.0 / tau_eps;
  return log_mvn_zero_mean(r, v);
}

inline double log_sum_exp(const std::vector<double>& x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

inline Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace mmgc
