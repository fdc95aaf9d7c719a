#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>

#include "mmgc/diagnostics.hpp"
#include "mmgc/dp.hpp"
#include "mmgc/numerics.hpp"
#include "support/helpers.hpp"

using namespace mmgc;

namespace {

// One-dimensional conjugate toy: y_i ~ N(theta_i, 1/tau),
// theta ~ DP(alpha, N(0, 1/lambda)).
struct ScalarToy {
  std::vector<double> y;
  double tau = 4.0;
  double lambda = 1.0;
  double alpha = 1.0;

  dp::ClusterState initial() const {
    dp::ClusterState st;
    st.assignment.assign(y.size(), 0);
    st.locations = {Eigen::VectorXd::Zero(1)};
    st.counts = {static_cast<int>(y.size())};
    st.alpha = alpha;
    return st;
  }

  void sweep(dp::ClusterState& st, RngStream& rng) const {
    auto log_lik = [&](int i, const Eigen::VectorXd& loc) {
      return log_normal_pdf(y[i] - loc[0], tau);
    };
    auto log_marginal = [&](int i) {
      const double var = 1.0 / tau + 1.0 / lambda;
      return -0.5 * (kLogTwoPi + std::log(var) + y[i] * y[i] / var);
    };
    auto draw_location = [&](int i) {
      PrecisionGaussian pg{Eigen::MatrixXd::Constant(1, 1, lambda + tau),
                           Eigen::VectorXd::Constant(1, tau * y[i])};
      return sample_canonical_gaussian(pg, rng);
    };
    dp::urn_sweep(st, log_lik, log_marginal, draw_location, rng);
    auto posterior = [&](const std::vector<int>& members) {
      double shift = 0.0;
      for (int i : members) shift += tau * y[i];
      return PrecisionGaussian{
          Eigen::MatrixXd::Constant(1, 1,
                                    lambda + tau * members.size()),
          Eigen::VectorXd::Constant(1, shift)};
    };
    dp::resample_locations(st, posterior, rng);
  }

  // Exact cluster marginal likelihood: y_c ~ N(0, tau^{-1} I + lambda^{-1} J).
  double log_cluster_marginal(const std::vector<int>& members) const {
    const int m = static_cast<int>(members.size());
    Eigen::VectorXd v(m);
    for (int k = 0; k < m; ++k) v[k] = y[members[k]];
    Eigen::MatrixXd cov =
        Eigen::MatrixXd::Constant(m, m, 1.0 / lambda);
    cov.diagonal().array() += 1.0 / tau;
    return log_mvn_zero_mean(v, cov);
  }
};

// All partitions of {0..n-1} as restricted growth strings.
void enumerate_partitions(int n, std::vector<std::vector<int>>& out) {
  std::vector<int> s(n, 0);
  for (;;) {
    out.push_back(s);
    int i = n - 1;
    for (; i > 0; --i) {
      int mx = 0;
      for (int j = 0; j < i; ++j) mx = std::max(mx, s[j]);
      if (s[i] <= mx) {
        s[i]++;
        for (int j = i + 1; j < n; ++j) s[j] = 0;
        break;
      }
      s[i] = 0;
    }
    if (i == 0) break;
  }
}

std::map<std::vector<int>, double> exact_partition_posterior(
    const ScalarToy& toy) {
  const int n = static_cast<int>(toy.y.size());
  std::vector<std::vector<int>> parts;
  enumerate_partitions(n, parts);
  std::map<std::vector<int>, double> logp;
  double mx = -1e300;
  for (const auto& s : parts) {
    int m = 1 + *std::max_element(s.begin(), s.end());
    double lp = m * std::log(toy.alpha);
    for (int c = 0; c < m; ++c) {
      std::vector<int> members;
      for (int i = 0; i < n; ++i)
        if (s[i] == c) members.push_back(i);
      lp += std::lgamma(static_cast<double>(members.size()));
      lp += toy.log_cluster_marginal(members);
    }
    logp[s] = lp;
    mx = std::max(mx, lp);
  }
  double total = 0.0;
  for (auto& [s, lp] : logp) total += std::exp(lp - mx);
  std::map<std::vector<int>, double> post;
  for (auto& [s, lp] : logp) post[s] = std::exp(lp - mx) / total;
  return post;
}

std::vector<int> canonical(const std::vector<int>& s) {
  std::vector<int> out(s.size());
  std::map<int, int> re;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto [it, fresh] = re.insert({s[i], static_cast<int>(re.size())});
    out[i] = it->second;
  }
  return out;
}

}  // namespace

TEST_CASE("single client always sits in one cluster") {
  ScalarToy toy{{1.3}};
  auto st = toy.initial();
  RngStream rng(31);
  for (int k = 0; k < 200; ++k) {
    toy.sweep(st, rng);
    st.validate();
    REQUIRE(st.n_clusters() == 1);
  }
}

TEST_CASE("vanishing alpha forces co-clustering") {
  ScalarToy toy{{0.1, -0.1}};
  toy.alpha = 1e-6;
  auto st = toy.initial();
  RngStream rng(32);
  int together = 0;
  const int sweeps = 10000;
  for (int k = 0; k < sweeps; ++k) {
    toy.sweep(st, rng);
    if (st.assignment[0] == st.assignment[1]) ++together;
  }
  REQUIRE(together > 0.99 * sweeps);
}

TEST_CASE("urn stationary distribution matches exhaustive enumeration") {
  ScalarToy toy{{0.2, 0.3, 2.0}};
  const auto exact = exact_partition_posterior(toy);
  auto st = toy.initial();
  RngStream rng(33);
  const int burn = 2000, sweeps = 200000;
  std::map<std::vector<int>, std::vector<double>> indicator;
  for (const auto& [s, p] : exact) indicator[s] = {};
  for (int k = 0; k < burn + sweeps; ++k) {
    toy.sweep(st, rng);
    st.validate();
    if (k < burn) continue;
    const auto c = canonical(st.assignment);
    for (auto& [s, trace] : indicator) trace.push_back(s == c ? 1.0 : 0.0);
  }
  for (const auto& [s, p] : exact) {
    const auto& trace = indicator[s];
    const double freq = testutil::mean_of(trace);
    const double mcse = cbm_mcse(trace).mcse;
    INFO("partition " << s[0] << s[1] << s[2] << " exact " << p << " freq "
                      << freq << " mcse " << mcse);
    REQUIRE(std::abs(freq - p) < std::max(3.0 * mcse, 0.004));
  }
}

TEST_CASE("partition distribution is invariant to client order") {
  const std::vector<double> base = {0.0, 0.4, 1.8, 2.2};
  const std::vector<int> perm = {2, 0, 3, 1};
  ScalarToy a{base};
  ScalarToy b;
  b.y.resize(4);
  for (int i = 0; i < 4; ++i) b.y[i] = base[perm[i]];

  auto run = [&](const ScalarToy& toy, std::uint64_t seed) {
    std::map<std::vector<int>, double> freq;
    auto st = toy.initial();
    RngStream rng(seed);
    const int burn = 2000, sweeps = 100000;
    for (int k = 0; k < burn + sweeps; ++k) {
      toy.sweep(st, rng);
      if (k < burn) continue;
      freq[canonical(st.assignment)] += 1.0 / sweeps;
    }
    return freq;
  };
  const auto fa = run(a, 34);
  auto fb_raw = run(b, 35);
  // map partitions of the permuted data back to the original client order
  std::map<std::vector<int>, double> fb;
  for (const auto& [s, p] : fb_raw) {
    std::vector<int> back(4);
    for (int i = 0; i < 4; ++i) back[perm[i]] = s[i];
    fb[canonical(back)] += p;
  }
  double tv = 0.0;
  std::vector<std::vector<int>> parts;
  enumerate_partitions(4, parts);
  for (const auto& s : parts) {
    const double pa = fa.count(s) ? fa.at(s) : 0.0;
    const double pb = fb.count(s) ? fb.at(s) : 0.0;
    tv += 0.5 * std::abs(pa - pb);
  }
  REQUIRE(tv < 0.02);
}

TEST_CASE("escobar-west update keeps the n=1 posterior at its prior") {
  // with a single client there is always one cluster and the posterior for
  // alpha equals its Gamma(1,1) prior (mean 1)
  RngStream rng(36);
  double alpha = 0.5;
  std::vector<double> trace;
  const int iters = 200000;
  for (int k = 0; k < iters; ++k) {
    alpha = dp::update_alpha(1, 1, alpha, 1.0, 1.0, rng);
    REQUIRE(alpha > 0.0);
    trace.push_back(alpha);
  }
  const double mcse = cbm_mcse(trace).mcse;
  REQUIRE(std::abs(testutil::mean_of(trace) - 1.0) < 4.0 * mcse);
}

TEST_CASE("escobar-west stationary mean matches quadrature for n=5, M=2") {
  // p(alpha | M, n) is proportional to
  // Ga(alpha; 1, 1) alpha^M Gamma(alpha) / Gamma(alpha + n)
  auto log_target = [](double a) {
    return -a + 2.0 * std::log(a) + std::lgamma(a) - std::lgamma(a + 5.0);
  };
  double num = 0.0, den = 0.0;
  const double step = 1e-4;
  for (double a = step / 2; a < 80.0; a += step) {
    const double w = std::exp(log_target(a));
    num += a * w;
    den += w;
  }
  const double quad_mean = num / den;

  RngStream rng(37);
  double alpha = 1.0;
  std::vector<double> trace;
  for (int k = 0; k < 300000; ++k) {
    alpha = dp::update_alpha(2, 5, alpha, 1.0, 1.0, rng);
    trace.push_back(alpha);
  }
  const double mcse = cbm_mcse(trace).mcse;
  INFO("quadrature mean " << quad_mean << " chain mean "
                          << testutil::mean_of(trace) << " mcse " << mcse);
  REQUIRE(std::abs(testutil::mean_of(trace) - quad_mean) < 4.0 * mcse);
}

TEST_CASE("prior cluster counts under the hyperparameter box span 3 to 18") {
  // E[M] for n = 299 under alpha ~ Gamma(a1, b1), by quadrature over a
  // log-spaced grid.
  auto expected_clusters = [](double a1, double b1) {
    const int n = 299;
    double num = 0.0, den = 0.0;
    for (double u = -10.0; u < 7.0; u += 0.002) {
      const double a = std::exp(u);
      const double logw =
          a1 * std::log(b1) - std::lgamma(a1) + a1 * std::log(a) - b1 * a;
      const double w = std::exp(logw);  // Gamma density times Jacobian a
      double em = 1.0;
      for (int i = 1; i < n; ++i) em += a / (a + i);
      num += em * w;
      den += w;
    }
    return num / den;
  };
  const double lo = expected_clusters(1.0, 4.0);
  const double hi = expected_clusters(4.0, 1.0);
  INFO("E[M] low " << lo << " high " << hi);
  REQUIRE(lo == Catch::Approx(3.0).margin(1.0));
  REQUIRE(hi == Catch::Approx(18.0).margin(1.5));
  REQUIRE(expected_clusters(1.0, 1.0) > lo);
  REQUIRE(expected_clusters(1.0, 1.0) < hi);
}

TEST_CASE("compaction keeps counts consistent") {
  ScalarToy toy{{0.5, -0.5, 3.0, 3.5, -2.0}};
  toy.alpha = 2.0;
  auto st = toy.initial();
  RngStream rng(38);
  for (int k = 0; k < 3000; ++k) {
    toy.sweep(st, rng);
    st.validate();
    REQUIRE(st.counts.size() == st.locations.size());
  }
}

TEST_CASE("non-finite callback aborts with the client id") {
  dp::ClusterState st;
  st.assignment = {0, 0};
  st.locations = {Eigen::VectorXd::Zero(1)};
  st.counts = {2};
  st.alpha = 1.0;
  RngStream rng(39);
  auto bad_lik = [](int, const Eigen::VectorXd&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  auto marg = [](int) { return 0.0; };
  auto draw = [](int) { return Eigen::VectorXd::Zero(1); };
  REQUIRE_THROWS_WITH(dp::urn_sweep(st, bad_lik, marg, draw, rng),
                      Catch::Matchers::ContainsSubstring("client"));
}
