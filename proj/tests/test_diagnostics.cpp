#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "mmgc/diagnostics.hpp"
#include "mmgc/rng.hpp"
#include "support/helpers.hpp"

using namespace mmgc;

TEST_CASE("constant trace has zero MCSE and passes any positive width") {
  std::vector<double> trace(500, 3.25);
  const CbmResult r = cbm_mcse(trace);
  REQUIRE(r.mcse == 0.0);
  REQUIRE(r.batch_count == 22);  // floor(sqrt(500)) = 22, 500/22 = 22
  REQUIRE(fixed_width_verdict(trace, 1e-9));
  REQUIRE_FALSE(fixed_width_verdict(trace, 0.0));
}

TEST_CASE("iid MCSE tracks sd over sqrt T across replications") {
  RngStream rng(61);
  const int t = 10000, reps = 100;
  int within = 0;
  double ratio_sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> trace(t);
    for (int k = 0; k < t; ++k) trace[k] = rng.normal();
    const double mcse = cbm_mcse(trace).mcse;
    const double target = 1.0 / std::sqrt(static_cast<double>(t));
    ratio_sum += mcse / target;
    if (std::abs(mcse - target) < 0.3 * target) ++within;
  }
  REQUIRE(ratio_sum / reps > 0.7);
  REQUIRE(ratio_sum / reps < 1.3);
  REQUIRE(within >= 90);
}

TEST_CASE("autocorrelated chains inflate the MCSE") {
  RngStream rng(62);
  const int t = 10000;
  std::vector<double> ar(t);
  double x = 0.0;
  const double phi = 0.9, innov_sd = std::sqrt(1.0 - phi * phi);
  for (int k = 0; k < t; ++k) {
    x = phi * x + innov_sd * rng.normal();
    ar[k] = x;  // stationary variance 1
  }
  const double mcse_ar = cbm_mcse(ar).mcse;
  const double iid_mcse = 1.0 / std::sqrt(static_cast<double>(t));
  REQUIRE(mcse_ar / iid_mcse > 2.0);
}

TEST_CASE("MCSE is shift invariant and scales linearly") {
  RngStream rng(63);
  std::vector<double> trace(4000);
  for (auto& v : trace) v = rng.normal();
  const double base = cbm_mcse(trace).mcse;
  std::vector<double> shifted = trace, scaled = trace;
  for (auto& v : shifted) v += 100.0;
  for (auto& v : scaled) v *= 7.0;
  REQUIRE(cbm_mcse(shifted).mcse == Catch::Approx(base).margin(1e-10));
  REQUIRE(cbm_mcse(scaled).mcse == Catch::Approx(7.0 * base).epsilon(1e-10));
}

TEST_CASE("short traces are refused") {
  std::vector<double> trace(99, 1.0);
  REQUIRE_THROWS_AS(cbm_mcse(trace), std::invalid_argument);
}

TEST_CASE("fixed width verdict on iid traces passes a loose target") {
  RngStream rng(64);
  const int t = 10000;
  std::vector<double> trace(t);
  for (auto& v : trace) v = rng.normal();
  // epsilon = 3 / sqrt(T) comfortably exceeds 1.96 MCSE ~ 2 / sqrt(T)
  REQUIRE(fixed_width_verdict(trace, 3.0 / std::sqrt(static_cast<double>(t)),
                              1.96));
}
