#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmgc/csv.hpp"
#include "mmgc/data.hpp"
#include "mmgc/model_base.hpp"

namespace mmgc {

struct SamplerConfig {
  ModelKind model = ModelKind::ddp;
  int n_iter = 10000;
  int burn_in = 2000;
  int thin = 5;
  std::uint64_t seed = 1;
  int n_chains = 1;
  double alpha_shape = 1.0;  // a1 for alpha ~ Gamma(a1, b1)
  double alpha_rate = 1.0;   // b1
  double tau_shape = 0.1;    // tau_eps, tau_gamma ~ Gamma(tau_shape, tau_rate)
  double tau_rate = 0.1;
  double wishart_df = 0.0;   // 0 means the minimum q+1
  int rho_grid = 100;
  double fixef_prior_precision = 0.0;  // 0 = flat prior on (mu, beta)

  void validate() const {
    if (burn_in < 0 || n_iter < burn_in)
      throw std::invalid_argument("config: need n_iter >= burn_in >= 0");
    if (thin < 1) throw std::invalid_argument("config: need thin >= 1");
    if (n_chains < 1) throw std::invalid_argument("config: need n_chains >= 1");
    if (rho_grid < 2) throw std::invalid_argument("config: need rho_grid >= 2");
    if (alpha_shape <= 0 || alpha_rate <= 0 || tau_shape <= 0 || tau_rate <= 0)
      throw std::invalid_argument("config: prior hyperparameters must be > 0");
  }

  double effective_wishart_df() const {
    return wishart_df > 0.0 ? wishart_df : static_cast<double>(kQ + 1);
  }

  // Key-value file: one `key = value` per line, '#' starts a comment.
  static SamplerConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    SamplerConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string key, eq, value;
      std::istringstream ls(line);
      if (!(ls >> key)) continue;
      if (!(ls >> eq >> value) || eq != "=")
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": expected 'key = value'");
      cfg.set(key, value);
    }
    cfg.validate();
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (key == "model") {
      model = model_from_name(value);
    } else if (key == "n_iter") {
      n_iter = std::stoi(value);
    } else if (key == "burn_in") {
      burn_in = std::stoi(value);
    } else if (key == "thin") {
      thin = std::stoi(value);
    } else if (key == "seed") {
      seed = std::stoull(value);
    } else if (key == "n_chains") {
      n_chains = std::stoi(value);
    } else if (key == "alpha_shape") {
      alpha_shape = std::stod(value);
    } else if (key == "alpha_rate") {
      alpha_rate = std::stod(value);
    } else if (key == "tau_shape") {
      tau_shape = std::stod(value);
    } else if (key == "tau_rate") {
      tau_rate = std::stod(value);
    } else if (key == "wishart_df") {
      wishart_df = std::stod(value);
    } else if (key == "rho_grid") {
      rho_grid = std::stoi(value);
    } else if (key == "fixef_prior_precision") {
      fixef_prior_precision = std::stod(value);
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"model", model_name(model)},
                          {"n_iter", n_iter},
                          {"burn_in", burn_in},
                          {"thin", thin},
                          {"seed", seed},
                          {"n_chains", n_chains},
                          {"alpha_shape", alpha_shape},
                          {"alpha_rate", alpha_rate},
                          {"tau_shape", tau_shape},
                          {"tau_rate", tau_rate},
                          {"wishart_df", wishart_df},
                          {"rho_grid", rho_grid},
                          {"fixef_prior_precision", fixef_prior_precision}};
  }
};

// Sampler abort carrying the iteration index; the wrapped message names the
// parameter whose update failed.
struct ChainError : std::runtime_error {
  int iteration;
  ChainError(int iter, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iter) + ": " + what),
        iteration(iter) {}
};

// Thinned posterior draws of one chain (or a concatenation of chains).
struct ChainOutput {
  ModelKind model = ModelKind::ddp;
  int n_clients = 0, n_obs = 0, n_modules = 0, n_groups = 0;

  std::vector<int> chain_of_draw;  // chain id per kept draw
  std::vector<int> iters;          // 1-based global iteration per kept draw

  std::vector<double> mu, tau_eps, tau_gamma, alpha_dp;
  std::vector<Eigen::VectorXd> beta;              // kNumFixef
  std::vector<Eigen::MatrixXd> lambda;            // q x q
  std::vector<Eigen::VectorXd> rho;               // G (ddp)
  std::vector<int> n_clusters;
  std::vector<Eigen::MatrixXd> client_effects;    // n x q: b_i or theta_i
  std::vector<Eigen::VectorXd> gamma_uni;         // S (mmcar)
  std::vector<Eigen::MatrixXd> gamma_mv;          // S x q (mmmv)
  std::vector<std::vector<int>> assignment;       // n, per draw
  std::vector<std::vector<Eigen::MatrixXd>> ddp_locations;  // M_t of q x (S+1)

  Eigen::MatrixXd loglik;  // T x N
  Eigen::MatrixXd fitted;  // T x N

  int n_draws() const { return static_cast<int>(iters.size()); }
};

inline ChainOutput merge_chains(const std::vector<ChainOutput>& chains) {
  if (chains.empty()) throw std::invalid_argument("merge_chains: no chains");
  ChainOutput out = chains.front();
  for (std::size_t c = 1; c < chains.size(); ++c) {
    const ChainOutput& ch = chains[c];
    auto append = [](auto& dst, const auto& src) {
      dst.insert(dst.end(), src.begin(), src.end());
    };
    append(out.chain_of_draw, ch.chain_of_draw);
    append(out.iters, ch.iters);
    append(out.mu, ch.mu);
    append(out.tau_eps, ch.tau_eps);
    append(out.tau_gamma, ch.tau_gamma);
    append(out.alpha_dp, ch.alpha_dp);
    append(out.beta, ch.beta);
    append(out.lambda, ch.lambda);
    append(out.rho, ch.rho);
    append(out.n_clusters, ch.n_clusters);
    append(out.client_effects, ch.client_effects);
    append(out.gamma_uni, ch.gamma_uni);
    append(out.gamma_mv, ch.gamma_mv);
    append(out.assignment, ch.assignment);
    append(out.ddp_locations, ch.ddp_locations);
    const auto rows = out.loglik.rows();
    out.loglik.conservativeResize(rows + ch.loglik.rows(), Eigen::NoChange);
    out.loglik.bottomRows(ch.loglik.rows()) = ch.loglik;
    if (out.fitted.size() > 0 && ch.fitted.size() > 0) {
      const auto frows = out.fitted.rows();
      out.fitted.conservativeResize(frows + ch.fitted.rows(), Eigen::NoChange);
      out.fitted.bottomRows(ch.fitted.rows()) = ch.fitted;
    }
  }
  return out;
}

inline std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash: cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[8192];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

inline std::string dataset_hash_hex(const std::filesystem::path& data_dir) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* f : {"outcomes.csv", "attendance.csv", "modules.csv"}) {
    const std::uint64_t part = fnv1a_file(data_dir / f);
    h ^= part;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Fit directory layout: samples.csv (long format), loglik.csv,
// assignments.csv (DP cluster indicators), meta.json.
// ---------------------------------------------------------------------------

inline void write_chain_outputs(const std::filesystem::path& dir,
                                const std::vector<ChainOutput>& chains,
                                const MMDataset& ds, const SamplerConfig& cfg,
                                const std::string& input_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int S = ds.n_modules;

  csv::Writer samples(dir / "samples.csv");
  samples.row("chain", "iter", "parameter", "value");
  csv::Writer loglik(dir / "loglik.csv");
  loglik.row("chain", "iter", "obs", "value");
  csv::Writer assign(dir / "assignments.csv");
  assign.row("chain", "iter", "client_id", "cluster");

  for (const ChainOutput& ch : chains) {
    for (int t = 0; t < ch.n_draws(); ++t) {
      const int chain = ch.chain_of_draw[t];
      const int iter = ch.iters[t];
      auto put = [&](const std::string& name, double v) {
        samples.row(chain, iter, name, v);
      };
      put("mu", ch.mu[t]);
      for (int k = 0; k < kNumFixef; ++k) put(kBetaNames[k], ch.beta[t][k]);
      put("tau_eps", ch.tau_eps[t]);
      if (ch.model == ModelKind::mmcar) put("tau_gamma", ch.tau_gamma[t]);
      put("alpha_dp", ch.alpha_dp[t]);
      put("n_clusters", static_cast<double>(ch.n_clusters[t]));
      // bracketed indices avoid commas so the long format stays 4 fields
      auto idx1 = [](long a) { return "[" + std::to_string(a) + "]"; };
      auto idx2 = [&](long a, long b) { return idx1(a) + idx1(b); };
      auto idx3 = [&](long a, long b, long c) {
        return idx1(a) + idx1(b) + idx1(c);
      };
      for (int r = 0; r < kQ; ++r)
        for (int c = 0; c < kQ; ++c)
          put("lambda" + idx2(r + 1, c + 1), ch.lambda[t](r, c));
      if (ch.model == ModelKind::ddp)
        for (int g = 0; g < ch.rho[t].size(); ++g)
          put("rho" + idx1(g + 1), ch.rho[t][g]);
      const char* ce_name = ch.model == ModelKind::ddp ? "theta" : "b";
      for (int i = 0; i < ds.n_clients; ++i)
        for (int k = 0; k < kQ; ++k)
          put(ce_name + idx2(ds.client_ids[i], k + 1),
              ch.client_effects[t](i, k));
      if (ch.model == ModelKind::mmcar)
        for (int s = 0; s < S; ++s)
          put("gamma" + idx1(ds.module_ids[s]), ch.gamma_uni[t][s]);
      if (ch.model == ModelKind::mmmv)
        for (int s = 0; s < S; ++s)
          for (int k = 0; k < kQ; ++k)
            put("gamma" + idx2(ds.module_ids[s], k + 1), ch.gamma_mv[t](s, k));
      if (ch.model == ModelKind::ddp) {
        const auto& locs = ch.ddp_locations[t];
        for (std::size_t m = 0; m < locs.size(); ++m) {
          for (int k = 0; k < kQ; ++k) {
            put("delta_b" + idx2(m + 1, k + 1), locs[m](k, 0));
            for (int s = 0; s < S; ++s)
              put("delta_a" + idx3(m + 1, k + 1, ds.module_ids[s]),
                  locs[m](k, s + 1));
          }
        }
      }
      for (int j = 0; j < ch.loglik.cols(); ++j)
        loglik.row(chain, iter, j + 1, ch.loglik(t, j));
      for (int i = 0; i < ds.n_clients; ++i)
        assign.row(chain, iter, ds.client_ids[i], ch.assignment[t][i] + 1);
    }
  }

  nlohmann::json meta;
  meta["model"] = model_name(cfg.model);
  meta["config"] = cfg.to_json();
  meta["input_hash"] = input_hash;
  meta["n_chains"] = static_cast<int>(chains.size());
  meta["n_draws_per_chain"] =
      chains.empty() ? 0 : chains.front().n_draws();
  meta["n_clients"] = ds.n_clients;
  meta["n_obs"] = ds.n_obs();
  meta["n_modules"] = ds.n_modules;
  meta["n_groups"] = ds.n_groups;
  std::ofstream mj(dir / "meta.json");
  mj << meta.dump(2) << "\n";
}

inline nlohmann::json read_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in)
    throw std::runtime_error("cannot open " + (dir / "meta.json").string());
  nlohmann::json j;
  in >> j;
  return j;
}

inline Eigen::MatrixXd read_loglik(const std::filesystem::path& dir) {
  auto t = csv::read_file(dir / "loglik.csv");
  const int cc = t.column("chain");
  const int ci = t.column("iter");
  const int co = t.column("obs");
  const int cv = t.column("value");
  long n_obs = 0;
  for (const auto& row : t.rows)
    n_obs = std::max(n_obs, csv::parse_int(row[co], "loglik.csv"));
  std::vector<std::pair<long, long>> keys;
  std::map<std::pair<long, long>, int> draw_index;
  for (const auto& row : t.rows) {
    const std::pair<long, long> key{csv::parse_int(row[cc], "loglik.csv"),
                                    csv::parse_int(row[ci], "loglik.csv")};
    if (!draw_index.count(key)) {
      draw_index[key] = static_cast<int>(keys.size());
      keys.push_back(key);
    }
  }
  Eigen::MatrixXd ll(keys.size(), n_obs);
  for (const auto& row : t.rows) {
    const std::pair<long, long> key{csv::parse_int(row[cc], "loglik.csv"),
                                    csv::parse_int(row[ci], "loglik.csv")};
    ll(draw_index[key], csv::parse_int(row[co], "loglik.csv") - 1) =
        csv::parse_real(row[cv], "loglik.csv");
  }
  return ll;
}

// Scalar traces in draw order per parameter, for diagnostics.
inline std::map<std::string, std::vector<double>> read_scalar_traces(
    const std::filesystem::path& dir) {
  auto t = csv::read_file(dir / "samples.csv");
  const int cp = t.column("parameter");
  const int cv = t.column("value");
  std::map<std::string, std::vector<double>> out;
  for (const auto& row : t.rows)
    out[row[cp]].push_back(csv::parse_real(row[cv], "samples.csv"));
  return out;
}

// Rebuild the structured posterior draws a fit directory holds. Rows are
// written draw-contiguously by write_chain_outputs; readers rely on that.
inline ChainOutput read_chain_output(const std::filesystem::path& dir,
                                     const MMDataset& ds) {
  ChainOutput out;
  const auto meta = read_meta(dir);
  out.model = model_from_name(meta.at("model").get<std::string>());
  out.n_clients = ds.n_clients;
  out.n_modules = ds.n_modules;
  out.n_groups = ds.n_groups;
  out.n_obs = meta.at("n_obs").get<int>();

  std::map<long, int> client_index, module_index;
  for (int i = 0; i < ds.n_clients; ++i) client_index[ds.client_ids[i]] = i;
  for (int s = 0; s < ds.n_modules; ++s) module_index[ds.module_ids[s]] = s;

  auto t = csv::read_file(dir / "samples.csv");
  const int cc = t.column("chain");
  const int ci = t.column("iter");
  const int cp = t.column("parameter");
  const int cv = t.column("value");
  long cur_chain = -1, cur_iter = -1;
  const int S = ds.n_modules;
  auto parse_bracket = [](const std::string& name) {
    std::vector<long> idx;
    std::size_t pos = name.find('[');
    while (pos != std::string::npos) {
      const std::size_t end = name.find(']', pos);
      idx.push_back(std::stol(name.substr(pos + 1, end - pos - 1)));
      pos = name.find('[', end);
    }
    return idx;
  };
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const long chain = csv::parse_int(row[cc], "samples.csv");
    const long iter = csv::parse_int(row[ci], "samples.csv");
    if (chain != cur_chain || iter != cur_iter) {
      cur_chain = chain;
      cur_iter = iter;
      out.chain_of_draw.push_back(static_cast<int>(chain));
      out.iters.push_back(static_cast<int>(iter));
      out.mu.push_back(0.0);
      out.tau_eps.push_back(0.0);
      out.tau_gamma.push_back(0.0);
      out.alpha_dp.push_back(0.0);
      out.beta.emplace_back(Eigen::VectorXd::Zero(kNumFixef));
      out.lambda.emplace_back(Eigen::MatrixXd::Zero(kQ, kQ));
      out.rho.emplace_back(Eigen::VectorXd::Zero(ds.n_groups));
      out.n_clusters.push_back(0);
      out.client_effects.emplace_back(
          Eigen::MatrixXd::Zero(ds.n_clients, kQ));
      if (out.model == ModelKind::mmcar)
        out.gamma_uni.emplace_back(Eigen::VectorXd::Zero(S));
      if (out.model == ModelKind::mmmv)
        out.gamma_mv.emplace_back(Eigen::MatrixXd::Zero(S, kQ));
      if (out.model == ModelKind::ddp) out.ddp_locations.emplace_back();
    }
    const std::string& name = row[cp];
    const double value = csv::parse_real(row[cv], "samples.csv");
    const int d = out.n_draws() - 1;
    if (name == "mu") {
      out.mu[d] = value;
    } else if (name == "tau_eps") {
      out.tau_eps[d] = value;
    } else if (name == "tau_gamma") {
      out.tau_gamma[d] = value;
    } else if (name == "alpha_dp") {
      out.alpha_dp[d] = value;
    } else if (name == "n_clusters") {
      out.n_clusters[d] = static_cast<int>(value);
      if (out.model == ModelKind::ddp)
        out.ddp_locations[d].resize(out.n_clusters[d],
                                    Eigen::MatrixXd::Zero(kQ, S + 1));
    } else if (name.rfind("beta_", 0) == 0) {
      for (int k = 0; k < kNumFixef; ++k)
        if (name == kBetaNames[k]) out.beta[d][k] = value;
    } else if (name.rfind("lambda[", 0) == 0) {
      const auto idx = parse_bracket(name);
      out.lambda[d](idx[0] - 1, idx[1] - 1) = value;
    } else if (name.rfind("rho[", 0) == 0) {
      const auto idx = parse_bracket(name);
      out.rho[d][idx[0] - 1] = value;
    } else if (name.rfind("theta[", 0) == 0 || name.rfind("b[", 0) == 0) {
      const auto idx = parse_bracket(name);
      out.client_effects[d](client_index.at(idx[0]), idx[1] - 1) = value;
    } else if (name.rfind("gamma[", 0) == 0) {
      const auto idx = parse_bracket(name);
      if (out.model == ModelKind::mmcar)
        out.gamma_uni[d][module_index.at(idx[0])] = value;
      else
        out.gamma_mv[d](module_index.at(idx[0]), idx[1] - 1) = value;
    } else if (name.rfind("delta_b[", 0) == 0) {
      const auto idx = parse_bracket(name);
      out.ddp_locations[d][idx[0] - 1](idx[1] - 1, 0) = value;
    } else if (name.rfind("delta_a[", 0) == 0) {
      const auto idx = parse_bracket(name);
      out.ddp_locations[d][idx[0] - 1](idx[1] - 1,
                                       module_index.at(idx[2]) + 1) = value;
    }
  }

  {
    auto ta = csv::read_file(dir / "assignments.csv");
    const int ac = ta.column("chain");
    const int ai = ta.column("iter");
    const int acl = ta.column("client_id");
    const int acu = ta.column("cluster");
    out.assignment.assign(out.n_draws(),
                          std::vector<int>(ds.n_clients, 0));
    long pc = -1, pi = -1;
    int d = -1;
    for (const auto& row : ta.rows) {
      const long chain = csv::parse_int(row[ac], "assignments.csv");
      const long iter = csv::parse_int(row[ai], "assignments.csv");
      if (chain != pc || iter != pi) {
        pc = chain;
        pi = iter;
        ++d;
      }
      out.assignment[d][client_index.at(csv::parse_int(row[acl],
                                                       "assignments.csv"))] =
          static_cast<int>(csv::parse_int(row[acu], "assignments.csv")) - 1;
    }
  }
  out.loglik = read_loglik(dir);
  return out;
}

}  // namespace mmgc
