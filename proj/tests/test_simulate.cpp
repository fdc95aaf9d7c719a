#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <set>

#include "mmgc/simulate.hpp"
#include "support/helpers.hpp"

using namespace mmgc;

TEST_CASE("default generation matches the design counts") {
  SimConfig cfg;
  RngStream rng(71, 0);
  const auto [ds, truth] = generate(cfg, rng);
  REQUIRE(ds.n_clients == 300);
  REQUIRE(ds.n_modules == 24);
  REQUIRE(ds.n_groups == 1);
  REQUIRE(ds.n_obs() == 900);

  std::vector<int> load(24, 0);
  int links = 0;
  for (int i = 0; i < ds.n_clients; ++i) {
    if (ds.treatment[i] == 1) {
      REQUIRE(!ds.attendance[i].empty());
      REQUIRE(ds.attendance[i].size() <= 4);
      // consecutive run
      for (std::size_t k = 1; k < ds.attendance[i].size(); ++k)
        REQUIRE(ds.attendance[i][k] == ds.attendance[i][k - 1] + 1);
    } else {
      REQUIRE(ds.attendance[i].empty());
    }
    for (int s : ds.attendance[i]) {
      load[s]++;
      ++links;
    }
  }
  for (int s = 0; s < 24; ++s) {
    REQUIRE(load[s] >= 11);
    REQUIRE(load[s] <= 26);
  }
  const double avg = static_cast<double>(links) / 24.0;
  REQUIRE(avg == Catch::Approx(22.0).margin(3.3));

  REQUIRE(truth.assignment.size() == 300);
  for (int a : truth.assignment) {
    REQUIRE(a >= 0);
    REQUIRE(a < 4);
  }
  REQUIRE(truth.cluster_locations.size() == 4);
  REQUIRE(truth.cluster_locations[0].rows() == 3);
  REQUIRE(truth.cluster_locations[0].cols() == 25);
}

TEST_CASE("generation is bit-reproducible under a fixed seed") {
  SimConfig cfg;
  RngStream a(5, 0), b(5, 0), c(6, 0);
  const auto [da, ta] = generate(cfg, a);
  const auto [db, tb] = generate(cfg, b);
  const auto [dc, tc] = generate(cfg, c);
  REQUIRE(da.observations.size() == db.observations.size());
  for (std::size_t k = 0; k < da.observations.size(); ++k)
    REQUIRE(da.observations[k].outcome == db.observations[k].outcome);
  REQUIRE(ta.cluster_locations[0] == tb.cluster_locations[0]);
  REQUIRE(da.attendance == db.attendance);
  // different seed differs
  bool any_diff = da.observations.size() != dc.observations.size();
  for (std::size_t k = 0; !any_diff && k < da.observations.size(); ++k)
    any_diff = da.observations[k].outcome != dc.observations[k].outcome;
  REQUIRE(any_diff);
}

TEST_CASE("true treatment-effect curve hits the plug-in values") {
  const SimTruth truth;
  REQUIRE(truth.treatment_effect(0.0) == 0.0);
  REQUIRE(truth.treatment_effect(3.0) == Catch::Approx(-5.25).margin(1e-12));
  REQUIRE(truth.treatment_effect(6.0) == Catch::Approx(-6.0).margin(1e-12));
}

TEST_CASE("responses decompose into mean plus known-precision noise") {
  SimConfig cfg;
  RngStream rng(72, 0);
  const auto [ds, truth] = generate(cfg, rng);
  std::vector<double> resid;
  for (const auto& obs : ds.observations) {
    const int i = obs.client;
    const Eigen::VectorXd theta =
        truth.cluster_locations[truth.assignment[i]] *
        ds.weights_ddp.row(i).transpose();
    const double mean =
        truth.mu +
        fixef_row(ds.treatment[i], obs.time).tail(kNumFixef).dot(truth.beta) +
        ranef_row(obs.time).dot(theta);
    resid.push_back(obs.outcome - mean);
    // UC clients carry no module contribution beyond the intercept column
    if (ds.treatment[i] == 0) {
      const Eigen::VectorXd b =
          truth.cluster_locations[truth.assignment[i]].col(0);
      REQUIRE(ranef_row(obs.time).dot(b) ==
              Catch::Approx(ranef_row(obs.time).dot(theta)).margin(1e-12));
    }
  }
  // var 1/tau_eps = 10
  REQUIRE(testutil::var_of(resid) == Catch::Approx(10.0).epsilon(0.12));
  REQUIRE(std::abs(testutil::mean_of(resid)) < 0.5);
}

TEST_CASE("cluster-location rows reproduce the CAR-implied covariance") {
  SimConfig cfg;
  RngStream rng(73, 0);
  MMDataset shape;
  {
    auto [d, t] = generate(cfg, rng);
    shape = d;
  }
  const AdjacencyStructure adj = build_adjacency(shape);
  const SimTruth truth;
  const int n = 10000;
  RngStream rng2(74, 0);
  const auto locs =
      draw_cluster_locations(n, truth.lambda_inv, adj, truth.rho_gen, rng2);
  const CarPrecision q = proper_car_precision(
      adj, Eigen::VectorXd::Constant(adj.n_groups, truth.rho_gen));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(25, 25);
  p(0, 0) = 1.0;
  p.block(1, 1, 24, 24) = q.matrix;
  const Eigen::MatrixXd p_inv = p.inverse();
  for (int k = 0; k < 3; ++k) {
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(n);
    for (const auto& loc : locs) rows.push_back(loc.row(k).transpose());
    const Eigen::MatrixXd target = truth.lambda_inv(k, k) * p_inv;
    const Eigen::MatrixXd emp = testutil::empirical_cov(rows);
    const double rel =
        (emp - target).norm() / target.norm();
    INFO("order " << k << " relative Frobenius error " << rel);
    REQUIRE(rel < 0.10);
  }
}

TEST_CASE("larger module counts scale the load bounds") {
  SimConfig cfg;
  cfg.n_modules = 48;
  RngStream rng(75, 0);
  const auto [ds, truth] = generate(cfg, rng);
  REQUIRE(ds.n_modules == 48);
  std::vector<int> load(48, 0);
  int links = 0;
  for (const auto& a : ds.attendance)
    for (int s : a) {
      load[s]++;
      ++links;
    }
  const auto [lo, hi] = default_module_bounds(cfg);
  REQUIRE(lo == 5);
  for (int s = 0; s < 48; ++s) {
    REQUIRE(load[s] >= lo);
    REQUIRE(load[s] <= hi);
  }
  REQUIRE(static_cast<double>(links) / 48.0 ==
          Catch::Approx(11.0).margin(2.0));
}

TEST_CASE("66 modules stay feasible") {
  SimConfig cfg;
  cfg.n_modules = 66;
  cfg.block_size = 4;
  RngStream rng(76, 0);
  const auto [ds, truth] = generate(cfg, rng);
  REQUIRE(ds.n_modules == 66);
  std::vector<int> load(66, 0);
  for (const auto& a : ds.attendance)
    for (int s : a) load[s]++;
  for (int s = 0; s < 66; ++s) REQUIRE(load[s] >= 1);
}

TEST_CASE("uneven multi-group layouts are supported") {
  SimConfig cfg;
  cfg.n_modules = 61;
  cfg.n_groups = 4;
  RngStream rng(80, 0);
  const auto [ds, truth] = generate(cfg, rng);
  REQUIRE(ds.n_modules == 61);
  REQUIRE(ds.n_groups == 4);
  // sizes 16,15,15,15; groups contiguous
  REQUIRE(ds.group_blocks[0].second == 16);
  REQUIRE(ds.group_blocks[3].second == 15);
  // every client's attendance stays inside one group
  for (int i = 0; i < ds.n_clients; ++i) {
    if (ds.attendance[i].empty()) continue;
    const int g = ds.module_group[ds.attendance[i].front()];
    for (int s : ds.attendance[i]) REQUIRE(ds.module_group[s] == g);
  }
  REQUIRE(truth.cluster_locations[0].cols() == 62);
}

TEST_CASE("dropout removes follow-up waves but never the baseline") {
  SimConfig cfg;
  cfg.dropout = 0.4;
  RngStream rng(77, 0);
  const auto [ds, truth] = generate(cfg, rng);
  REQUIRE(ds.n_obs() < 900);
  for (int i = 0; i < ds.n_clients; ++i) {
    REQUIRE(ds.obs_count(i) >= 1);
    REQUIRE(ds.observations[ds.client_obs_offset[i]].time == 0.0);
  }
}

TEST_CASE("unsatisfiable attendance bounds raise an error") {
  SimConfig cfg;
  cfg.min_per_module = 22;
  cfg.max_per_module = 22;
  cfg.max_attempts = 40;
  RngStream rng(78, 0);
  REQUIRE_THROWS_WITH(generate(cfg, rng),
                      Catch::Matchers::ContainsSubstring("unsatisfiable"));
}

TEST_CASE("truth json round trips") {
  SimConfig cfg;
  cfg.clients_cbt = 30;
  cfg.clients_uc = 20;
  cfg.n_modules = 8;
  RngStream rng(79, 0);
  const auto [ds, truth] = generate(cfg, rng);
  const auto dir = std::filesystem::temp_directory_path() / "mmgc_truth";
  std::filesystem::create_directories(dir);
  write_truth(truth, dir / "truth.json");
  const SimTruth back = read_truth(dir / "truth.json");
  REQUIRE(back.mu == truth.mu);
  REQUIRE(back.beta == truth.beta);
  REQUIRE(back.assignment == truth.assignment);
  REQUIRE((back.cluster_locations[2] - truth.cluster_locations[2])
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}
