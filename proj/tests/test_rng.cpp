#include <catch2/catch_amalgamated.hpp>

#include "mmgc/rng.hpp"
#include "support/helpers.hpp"

using mmgc::RngStream;

TEST_CASE("identical (seed, stream) gives identical sequences") {
  RngStream a(42, 3), b(42, 3);
  for (int i = 0; i < 1000; ++i) REQUIRE(a() == b());
  REQUIRE(a.normal() == b.normal());
  REQUIRE(a.gamma(0.7, 2.0) == b.gamma(0.7, 2.0));
}

TEST_CASE("different streams of one seed diverge") {
  RngStream a(42, 1), b(42, 2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a() == b()) ++same;
  REQUIRE(same == 0);
}

TEST_CASE("uniform stays inside the open unit interval") {
  RngStream rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("normal and gamma moments") {
  RngStream rng(11);
  const int n = 200000;
  std::vector<double> z(n), g(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  for (int i = 0; i < n; ++i) g[i] = rng.gamma(2.5, 1.5);
  REQUIRE(std::abs(testutil::mean_of(z)) < 4.0 / std::sqrt(n));
  REQUIRE(std::abs(testutil::var_of(z) - 1.0) < 0.02);
  // Gamma(2.5, 1.5): mean 5/3, var 10/9.
  REQUIRE(std::abs(testutil::mean_of(g) - 2.5 / 1.5) <
          4.0 * std::sqrt(10.0 / 9.0 / n));
  REQUIRE(std::abs(testutil::var_of(g) - 10.0 / 9.0) < 0.03);
}

TEST_CASE("small-shape gamma stays positive with correct mean") {
  RngStream rng(13);
  const int n = 200000;
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) {
    g[i] = rng.gamma(0.1, 0.1);
    REQUIRE(g[i] > 0.0);
  }
  REQUIRE(std::abs(testutil::mean_of(g) - 1.0) <
          4.0 * std::sqrt(10.0 / n));
}

TEST_CASE("beta moments") {
  RngStream rng(17);
  const int n = 100000;
  std::vector<double> b(n);
  for (int i = 0; i < n; ++i) b[i] = rng.beta(2.0, 5.0);
  REQUIRE(std::abs(testutil::mean_of(b) - 2.0 / 7.0) < 0.005);
}

TEST_CASE("permutation is uniform over positions") {
  RngStream rng(19);
  const int n = 5, reps = 60000;
  std::vector<std::vector<int>> counts(n, std::vector<int>(n, 0));
  for (int r = 0; r < reps; ++r) {
    const auto p = rng.permutation(n);
    for (int i = 0; i < n; ++i) counts[i][p[i]]++;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      REQUIRE(std::abs(counts[i][j] / double(reps) - 0.2) < 0.01);
}

TEST_CASE("categorical respects weights") {
  RngStream rng(23);
  std::vector<double> w = {1.0, 3.0, 6.0};
  std::vector<int> c(3, 0);
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) c[rng.categorical(w)]++;
  REQUIRE(std::abs(c[0] / double(reps) - 0.1) < 0.01);
  REQUIRE(std::abs(c[1] / double(reps) - 0.3) < 0.01);
  REQUIRE(std::abs(c[2] / double(reps) - 0.6) < 0.01);
}
