#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mmgc {

struct CbmResult {
  double mcse = 0.0;
  int batch_count = 0;
};

// Consistent-batch-means Monte Carlo standard error: batch size floor(sqrt(T)),
// trailing partial batch dropped, MCSE = sd(batch means) / sqrt(#batches).
inline CbmResult cbm_mcse(std::span<const double> trace) {
  const std::size_t t = trace.size();
  if (t < 100)
    throw std::invalid_argument(
        "cbm_mcse: need at least 100 draws, got " + std::to_string(t));
  const std::size_t batch = static_cast<std::size_t>(std::floor(std::sqrt(
      static_cast<double>(t))));
  const std::size_t n_batches = t / batch;
  std::vector<double> means(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < batch; ++k) acc += trace[b * batch + k];
    means[b] = acc / static_cast<double>(batch);
  }
  double grand = 0.0;
  for (double m : means) grand += m;
  grand /= static_cast<double>(n_batches);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  const double sd =
      std::sqrt(ss / static_cast<double>(n_batches - 1));
  return {sd / std::sqrt(static_cast<double>(n_batches)),
          static_cast<int>(n_batches)};
}

// Fixed-width rule: converged when z * MCSE < epsilon.
inline bool fixed_width_verdict(std::span<const double> trace, double epsilon,
                                double z = 1.96) {
  return z * cbm_mcse(trace).mcse < epsilon;
}

inline double trace_mean(std::span<const double> trace) {
  double acc = 0.0;
  for (double v : trace) acc += v;
  return acc / static_cast<double>(trace.size());
}

inline double trace_sd(std::span<const double> trace) {
  const double mean = trace_mean(trace);
  double ss = 0.0;
  for (double v : trace) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(trace.size() - 1));
}

}  // namespace mmgc
