#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmgc/data.hpp"

namespace mmgc {

// Module neighbor structure: modules at adjacent order positions within the
// same open-enrollment group communicate. Block-diagonal over groups.
struct AdjacencyStructure {
  int n_modules = 0;
  int n_groups = 0;
  Eigen::MatrixXd omega;    // S x S symmetric 0/1
  Eigen::VectorXd degree;   // row sums of omega
  std::vector<std::pair<int, int>> group_blocks;  // (offset, size)
};

// CAR precision with cached per-group spectral quantities. The cached
// eigenvalues of D_g^{-1/2} Omega_g D_g^{-1/2} give
//   log|D_g - rho Omega_g| = log|D_g| + sum_k log(1 - rho * lambda_k)
// for any rho in (-1,1) without refactorizing.
struct CarPrecision {
  enum class Kind { improper, proper };

  Kind kind = Kind::improper;
  Eigen::MatrixXd matrix;  // S x S block-diagonal precision
  int rank = 0;
  Eigen::VectorXd rho;     // per group, proper only
  std::vector<std::pair<int, int>> group_blocks;

  std::vector<Eigen::VectorXd> normalized_spectra;  // per group
  std::vector<double> log_det_degree;               // per group: sum log d_i
  std::vector<Eigen::VectorXd> block_eigenvalues;   // of D_g - Omega_g
  std::vector<Eigen::MatrixXd> block_eigenvectors;

  double log_det_group(int g, double rho_g) const {
    const auto& lam = normalized_spectra[g];
    double acc = log_det_degree[g];
    for (int k = 0; k < lam.size(); ++k) acc += std::log1p(-rho_g * lam[k]);
    return acc;
  }

  double log_det() const {
    if (kind != Kind::proper)
      throw std::logic_error("log_det: improper CAR precision is singular");
    double acc = 0.0;
    for (std::size_t g = 0; g < group_blocks.size(); ++g)
      acc += log_det_group(static_cast<int>(g), rho[static_cast<int>(g)]);
    return acc;
  }
};

inline AdjacencyStructure build_adjacency(const std::vector<int>& module_group,
                                          const std::vector<int>& module_order) {
  const int S = static_cast<int>(module_group.size());
  if (static_cast<int>(module_order.size()) != S)
    throw std::invalid_argument("build_adjacency: group/order size mismatch");
  AdjacencyStructure adj;
  adj.n_modules = S;
  adj.omega = Eigen::MatrixXd::Zero(S, S);
  adj.degree = Eigen::VectorXd::Zero(S);
  if (S == 0) return adj;

  for (int s = 1; s < S; ++s)
    if (module_group[s] < module_group[s - 1])
      throw std::logic_error("build_adjacency: groups must be contiguous");

  int off = 0;
  while (off < S) {
    int size = 1;
    while (off + size < S && module_group[off + size] == module_group[off])
      ++size;
    if (size == 1)
      throw std::runtime_error(
          "build_adjacency: group containing module index " +
          std::to_string(off) + " has a single module; no CAR structure");
    adj.group_blocks.emplace_back(off, size);
    off += size;
  }
  adj.n_groups = static_cast<int>(adj.group_blocks.size());

  for (const auto& [begin, size] : adj.group_blocks)
    for (int s = begin; s < begin + size; ++s)
      for (int t = s + 1; t < begin + size; ++t)
        if (std::abs(module_order[s] - module_order[t]) == 1)
          adj.omega(s, t) = adj.omega(t, s) = 1.0;
  adj.degree = adj.omega.rowwise().sum();
  return adj;
}

inline AdjacencyStructure build_adjacency(const MMDataset& ds) {
  return build_adjacency(ds.module_group, ds.module_order);
}

namespace detail {

inline void cache_spectra(CarPrecision& car, const AdjacencyStructure& adj) {
  car.group_blocks = adj.group_blocks;
  for (const auto& [begin, size] : adj.group_blocks) {
    const Eigen::MatrixXd omega_g = adj.omega.block(begin, begin, size, size);
    const Eigen::VectorXd deg_g = adj.degree.segment(begin, size);
    const Eigen::VectorXd dinv_sqrt = deg_g.array().sqrt().inverse();
    const Eigen::MatrixXd normalized =
        dinv_sqrt.asDiagonal() * omega_g * dinv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normalized);
    car.normalized_spectra.push_back(es.eigenvalues());
    car.log_det_degree.push_back(deg_g.array().log().sum());

    Eigen::MatrixXd q_g = -omega_g;
    q_g.diagonal() = deg_g;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esq(q_g);
    car.block_eigenvalues.push_back(esq.eigenvalues());
    car.block_eigenvectors.push_back(esq.eigenvectors());
  }
}

}  // namespace detail

// Q = D - Omega. Rank S - G is verified numerically: eigenvalues below
// 1e-8 of the largest are treated as zero.
inline CarPrecision improper_car_precision(const AdjacencyStructure& adj) {
  CarPrecision car;
  car.kind = CarPrecision::Kind::improper;
  const int S = adj.n_modules;
  car.matrix = -adj.omega;
  car.matrix.diagonal() = adj.degree;
  detail::cache_spectra(car, adj);

  double max_eig = 0.0;
  for (const auto& ev : car.block_eigenvalues)
    max_eig = std::max(max_eig, ev.size() ? ev.maxCoeff() : 0.0);
  const double tol = 1e-8 * max_eig;
  int rank = 0;
  for (const auto& ev : car.block_eigenvalues)
    for (int k = 0; k < ev.size(); ++k)
      if (ev[k] > tol) ++rank;
  car.rank = rank;
  if (rank != S - adj.n_groups)
    throw std::runtime_error("improper_car_precision: numerical rank " +
                             std::to_string(rank) + " != S - G = " +
                             std::to_string(S - adj.n_groups));
  return car;
}

// Q_g = D_g - rho_g Omega_g, full rank for every rho_g in (-1,1).
inline CarPrecision proper_car_precision(const AdjacencyStructure& adj,
                                         const Eigen::VectorXd& rho) {
  if (rho.size() != adj.n_groups)
    throw std::invalid_argument("proper_car_precision: need one rho per group");
  for (int g = 0; g < rho.size(); ++g)
    if (!(rho[g] > -1.0 && rho[g] < 1.0))
      throw std::domain_error("proper_car_precision: rho must lie in (-1,1)");
  CarPrecision car;
  car.kind = CarPrecision::Kind::proper;
  car.rho = rho;
  const int S = adj.n_modules;
  car.matrix = Eigen::MatrixXd::Zero(S, S);
  detail::cache_spectra(car, adj);
  for (int g = 0; g < adj.n_groups; ++g) {
    const auto& [begin, size] = adj.group_blocks[g];
    car.matrix.block(begin, begin, size, size) =
        -rho[g] * adj.omega.block(begin, begin, size, size);
    car.matrix.diagonal().segment(begin, size) = adj.degree.segment(begin, size);
  }
  car.rank = S;
  return car;
}

// Orthonormal basis of the per-group sum-to-zero subspace (Helmert columns),
// S x (S - G). This is the row space of the improper CAR precision.
inline Eigen::MatrixXd sum_zero_basis(const AdjacencyStructure& adj) {
  const int S = adj.n_modules;
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(S, S - adj.n_groups);
  int col = 0;
  for (const auto& [begin, size] : adj.group_blocks)
    for (int j = 1; j < size; ++j, ++col) {
      const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
      for (int i = 0; i < j; ++i) basis(begin + i, col) = 1.0 / norm;
      basis(begin + j, col) = -static_cast<double>(j) / norm;
    }
  return basis;
}

// Replace one group's smoothing parameter, reusing cached spectra.
inline void set_rho(CarPrecision& car, const AdjacencyStructure& adj, int g,
                    double rho_g) {
  if (car.kind != CarPrecision::Kind::proper)
    throw std::logic_error("set_rho: precision is not proper");
  if (!(rho_g > -1.0 && rho_g < 1.0))
    throw std::domain_error("set_rho: rho must lie in (-1,1)");
  const auto& [begin, size] = adj.group_blocks[g];
  car.rho[g] = rho_g;
  car.matrix.block(begin, begin, size, size) =
      -rho_g * adj.omega.block(begin, begin, size, size);
  car.matrix.diagonal().segment(begin, size) = adj.degree.segment(begin, size);
}

}  // namespace mmgc
