// Command-line surface: simulate, fit, stats, diagnose, summarize, compare,
// sensitivity. All outputs are deterministic given identical inputs and
// seeds. MMGC_OUT provides a default output directory when --out is omitted.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmgc/diagnostics.hpp"
#include "mmgc/fit.hpp"
#include "mmgc/models.hpp"
#include "mmgc/posterior.hpp"
#include "mmgc/simulate.hpp"

namespace fs = std::filesystem;
using namespace mmgc;

namespace {

std::string resolve_out(std::string out, const char* what) {
  if (out.empty()) {
    const char* env = std::getenv("MMGC_OUT");
    if (env != nullptr && *env != '\0') return env;
    throw CLI::ValidationError(std::string(what) +
                               ": --out not given and MMGC_OUT is unset");
  }
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

struct FitFlags {
  std::string model;
  std::string data;
  std::string config;
  std::string out;
  int chains = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

// Flags override the configuration file where both are given.
SamplerConfig load_config(const FitFlags& f) {
  SamplerConfig cfg;
  if (!f.config.empty()) cfg = SamplerConfig::from_file(f.config);
  if (!f.model.empty()) cfg.model = model_from_name(f.model);
  if (f.chains > 0) cfg.n_chains = f.chains;
  if (f.seed_set) cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

void run_fit_to_dir(const SamplerConfig& cfg, const fs::path& data_dir,
                    const fs::path& out_dir) {
  const MMDataset ds = load_dataset(data_dir);
  const auto chains = run_chains(ds, cfg);
  write_chain_outputs(out_dir, chains, ds, cfg, dataset_hash_hex(data_dir));
}

int cmd_stats(const fs::path& fit_dir, const fs::path& out_file) {
  const FitReport report = fit_report(read_loglik(fit_dir));
  write_fit_report(report, out_file);
  std::cout << "d_bar=" << report.d_bar << " neg_lpml=" << report.neg_lpml
            << " dic3=" << report.dic3 << " n_draws=" << report.n_draws
            << "\n";
  return 0;
}

bool monitored_parameter(const std::string& name) {
  if (name == "mu" || name == "tau_eps" || name == "tau_gamma" ||
      name == "alpha_dp" || name == "n_clusters")
    return true;
  if (name.rfind("beta_", 0) == 0 || name.rfind("rho[", 0) == 0) return true;
  if (name == "lambda[1][1]" || name == "lambda[2][2]" ||
      name == "lambda[3][3]")
    return true;
  return false;
}

int cmd_diagnose(const fs::path& fit_dir, const fs::path& out_file,
                 double epsilon_sd, double z) {
  const auto traces = read_scalar_traces(fit_dir);
  csv::Writer w(out_file);
  w.row("parameter", "mean", "sd", "mcse", "verdict");
  bool all_pass = true;
  for (const auto& [name, trace] : traces) {
    if (!monitored_parameter(name)) continue;
    const double mean = trace_mean(trace);
    const double sd = trace_sd(trace);
    double mcse = 0.0;
    bool pass = true;
    if (sd > 0.0) {
      mcse = cbm_mcse(trace).mcse;
      pass = z * mcse < epsilon_sd * sd;
    }
    all_pass = all_pass && pass;
    w.row(name, mean, sd, mcse, pass ? "pass" : "fail");
  }
  std::cout << (all_pass ? "converged" : "not converged") << "\n";
  return 0;
}

int cmd_summarize(const fs::path& fit_dir, const fs::path& data_dir,
                  const fs::path& out_dir, const std::vector<double>& times,
                  double grid_max, double grid_step, bool exclude_uc) {
  const MMDataset ds = load_dataset(data_dir);
  const ChainOutput chain = read_chain_output(fit_dir, ds);
  fs::create_directories(out_dir);

  write_margins_csv(predictive_margins(chain.beta, times),
                    out_dir / "margins.csv");

  std::vector<double> grid;
  for (double t = 0.0; t <= grid_max + 1e-9; t += grid_step)
    grid.push_back(t);
  write_curves_csv(growth_curves(chain, ds, grid), out_dir / "curves.csv");

  const std::vector<int> partition = dahl_partition(chain.assignment);
  write_partition_csv(partition, ds, out_dir / "dahl.csv");
  if (chain.model == ModelKind::ddp) {
    const auto cells =
        module_trajectories(chain, ds, partition, !exclude_uc);
    write_trajectories_csv(cells, grid, out_dir / "trajectories.csv");
    write_coefficients_csv(cells, out_dir / "coefficients.csv");
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& fit_dirs,
                const fs::path& out_file) {
  csv::Writer w(out_file);
  w.row("model", "d_bar", "neg_lpml", "dic3");
  std::cout << std::left << std::setw(8) << "model" << std::right
            << std::setw(12) << "d_bar" << std::setw(12) << "-lpml"
            << std::setw(12) << "dic3" << "\n";
  for (const auto& dir : fit_dirs) {
    const auto meta = read_meta(dir);
    const FitReport r = fit_report(read_loglik(dir));
    const std::string model = meta.at("model").get<std::string>();
    w.row(model, r.d_bar, r.neg_lpml, r.dic3);
    std::cout << std::left << std::setw(8) << model << std::right
              << std::setw(12) << std::fixed << std::setprecision(1) << r.d_bar
              << std::setw(12) << r.neg_lpml << std::setw(12) << r.dic3
              << "\n";
  }
  return 0;
}

int cmd_sensitivity(const fs::path& data_dir, const fs::path& out_dir,
                    const std::string& config_path,
                    const std::vector<double>& grid) {
  const MMDataset ds = load_dataset(data_dir);
  SamplerConfig cfg;
  if (!config_path.empty()) cfg = SamplerConfig::from_file(config_path);
  cfg.model = ModelKind::ddp;
  cfg.validate();
  fs::create_directories(out_dir);

  const auto base_chains = run_chains(ds, cfg);
  const std::vector<int> base_partition =
      dahl_partition(merge_chains(base_chains).assignment);
  write_partition_csv(base_partition, ds, out_dir / "dahl_base.csv");

  csv::Writer w(out_dir / "sensitivity.csv");
  w.row("alpha_shape", "alpha_rate", "ari", "dahl_clusters");
  for (double a1 : grid)
    for (double b1 : grid) {
      SamplerConfig alt = cfg;
      alt.alpha_shape = a1;
      alt.alpha_rate = b1;
      const auto chains = run_chains(ds, alt);
      const std::vector<int> part =
          dahl_partition(merge_chains(chains).assignment);
      const double ari = adjusted_rand_index(base_partition, part);
      const int k = 1 + *std::max_element(part.begin(), part.end());
      w.row(a1, b1, ari, k);
      std::cout << "a1=" << a1 << " b1=" << b1 << " ari=" << ari
                << " clusters=" << k << "\n";
    }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian multiple-membership growth-curve models"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string sim_out;
  std::uint64_t sim_seed = 1;
  SimConfig sim_cfg;
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--seed", sim_seed, "rng seed");
  sim->add_option("--modules", sim_cfg.n_modules, "number of modules");
  sim->add_option("--groups", sim_cfg.n_groups, "open-enrollment groups");
  sim->add_option("--clients-cbt", sim_cfg.clients_cbt, "CBT clients");
  sim->add_option("--clients-uc", sim_cfg.clients_uc, "usual-care clients");
  sim->add_option("--dropout", sim_cfg.dropout,
                  "follow-up wave missingness probability");

  // fit
  auto* fit = app.add_subcommand("fit", "run a Gibbs sampler");
  FitFlags ff;
  fit->add_option("--model", ff.model, "mmcar|mmmv|ddp");
  fit->add_option("--data", ff.data, "dataset directory")->required();
  fit->add_option("--config", ff.config, "sampler configuration file");
  fit->add_option("--out", ff.out, "output directory");
  fit->add_option("--chains", ff.chains, "number of chains");
  fit->add_option("--seed", ff.seed, "rng seed")
      ->each([&](const std::string&) { ff.seed_set = true; });

  // stats
  auto* stats = app.add_subcommand("stats", "fit statistics from a fit");
  std::string stats_fit, stats_out;
  stats->add_option("--fit", stats_fit, "fit directory")->required();
  stats->add_option("--out", stats_out, "output json path");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "batch-means convergence check");
  std::string diag_fit, diag_out;
  double diag_eps = 0.1, diag_z = 1.96;
  diag->add_option("--fit", diag_fit, "fit directory")->required();
  diag->add_option("--out", diag_out, "output csv path");
  diag->add_option("--epsilon-sd", diag_eps,
                   "half-width target in posterior-sd units");
  diag->add_option("--z", diag_z, "normal quantile");

  // summarize
  auto* summ = app.add_subcommand("summarize", "posterior summaries");
  std::string summ_fit, summ_data, summ_out, summ_times = "0,3,6";
  double summ_grid_max = 6.0, summ_grid_step = 0.5;
  bool summ_exclude_uc = false;
  summ->add_option("--fit", summ_fit, "fit directory")->required();
  summ->add_option("--data", summ_data, "dataset directory")->required();
  summ->add_option("--out", summ_out, "output directory");
  summ->add_option("--times", summ_times, "margin times, comma separated");
  summ->add_option("--grid-max", summ_grid_max, "curve grid end (months)");
  summ->add_option("--grid-step", summ_grid_step, "curve grid step");
  summ->add_flag("--exclude-uc", summ_exclude_uc,
                 "drop usual-care clients from cluster trajectories");

  // compare
  auto* cmp = app.add_subcommand("compare", "fit-statistic table across fits");
  std::vector<std::string> cmp_fits;
  std::string cmp_out;
  cmp->add_option("--fits", cmp_fits, "fit directories")->required();
  cmp->add_option("--out", cmp_out, "output csv path");

  // sensitivity
  auto* sens = app.add_subcommand(
      "sensitivity", "concentration-prior sweep with partition agreement");
  std::string sens_data, sens_out, sens_config, sens_grid = "1,4";
  sens->add_option("--data", sens_data, "dataset directory")->required();
  sens->add_option("--out", sens_out, "output directory");
  sens->add_option("--config", sens_config, "base sampler configuration");
  sens->add_option("--grid", sens_grid,
                   "hyperparameter values for both a1 and b1");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const fs::path out = resolve_out(sim_out, "simulate");
      RngStream rng(sim_seed, 0);
      auto [ds, truth] = generate(sim_cfg, rng);
      write_simulation(out, ds, truth);
      std::cout << "wrote " << out.string() << " (" << ds.n_clients
                << " clients, " << ds.n_obs() << " observations, "
                << ds.n_modules << " modules)\n";
      return 0;
    }
    if (*fit) {
      const SamplerConfig cfg = load_config(ff);
      run_fit_to_dir(cfg, ff.data, resolve_out(ff.out, "fit"));
      return 0;
    }
    if (*stats)
      return cmd_stats(stats_fit,
                       stats_out.empty() ? fs::path(stats_fit) / "stats.json"
                                         : fs::path(stats_out));
    if (*diag)
      return cmd_diagnose(diag_fit,
                          diag_out.empty()
                              ? fs::path(diag_fit) / "diagnostics.csv"
                              : fs::path(diag_out),
                          diag_eps, diag_z);
    if (*summ)
      return cmd_summarize(summ_fit, summ_data,
                           resolve_out(summ_out, "summarize"),
                           parse_list(summ_times), summ_grid_max,
                           summ_grid_step, summ_exclude_uc);
    if (*cmp)
      return cmd_compare(cmp_fits, cmp_out.empty()
                                       ? fs::path("compare.csv")
                                       : fs::path(cmp_out));
    if (*sens)
      return cmd_sensitivity(sens_data, resolve_out(sens_out, "sensitivity"),
                             sens_config, parse_list(sens_grid));
  } catch (const ChainError& e) {
    std::cerr << "sampler abort: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
