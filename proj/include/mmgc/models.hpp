#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

#include "mmgc/model_base.hpp"
#include "mmgc/model_ddp.hpp"
#include "mmgc/model_mmcar.hpp"
#include "mmgc/model_mmmv.hpp"
#include "mmgc/sampler.hpp"

namespace mmgc {

namespace detail {

inline void record_common(ChainOutput& out, int chain_id, int iter,
                          const ModelData& md, const FixedEffects& fe,
                          double tau_eps, const Eigen::MatrixXd& lambda,
                          double alpha, int n_clusters,
                          const Eigen::VectorXd& random_part) {
  out.chain_of_draw.push_back(chain_id);
  out.iters.push_back(iter);
  out.mu.push_back(fe.mu);
  out.beta.push_back(fe.beta);
  out.tau_eps.push_back(tau_eps);
  out.lambda.push_back(lambda);
  out.alpha_dp.push_back(alpha);
  out.n_clusters.push_back(n_clusters);
  const Eigen::VectorXd fit = fixef_fit(md, fe) + random_part;
  const int t = static_cast<int>(out.iters.size()) - 1;
  for (int j = 0; j < md.N; ++j) {
    out.fitted(t, j) = fit[j];
    out.loglik(t, j) = log_normal_pdf(md.y[j] - fit[j], tau_eps);
  }
}

inline int count_kept(const SamplerConfig& cfg) {
  return (cfg.n_iter - cfg.burn_in) / cfg.thin;
}

}  // namespace detail

// Runs one Gibbs chain. Sweep order per iteration: fixed effects, client or
// cluster step, module step (additive models), precisions, rho (DDP), alpha.
// Draw `iter` (1-based) is kept when iter > burn_in and
// (iter - burn_in) % thin == 0.
inline ChainOutput run_chain(const MMDataset& ds, const SamplerConfig& cfg,
                             RngStream& rng) {
  cfg.validate();
  const ModelData md = build_model_data(ds);
  ChainOutput out;
  out.model = cfg.model;
  out.n_clients = md.n;
  out.n_obs = md.N;
  out.n_modules = md.S;
  out.n_groups = md.G;
  const int keep = detail::count_kept(cfg);
  out.loglik.resize(keep, md.N);
  out.fitted.resize(keep, md.N);
  const int chain_id =
      rng.stream_id() == 0 ? 1 : static_cast<int>(rng.stream_id());

  auto kept = [&](int iter) {
    return iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 &&
           static_cast<int>(out.iters.size()) < keep;
  };

  auto client_matrix = [&](const dp::ClusterState& cl) {
    Eigen::MatrixXd b(md.n, kQ);
    for (int i = 0; i < md.n; ++i)
      b.row(i) = cl.locations[cl.assignment[i]].transpose();
    return b;
  };

  switch (cfg.model) {
    case ModelKind::mmcar: {
      MmcarState st = init_mmcar(md, cfg);
      for (int iter = 1; iter <= cfg.n_iter; ++iter) {
        try {
          sweep_mmcar(st, md, cfg, rng);
        } catch (const std::exception& e) {
          throw ChainError(iter, e.what());
        }
        if (!kept(iter)) continue;
        detail::record_common(out, chain_id, iter, md, st.fe, st.tau_eps,
                              st.lambda, st.clusters.alpha,
                              st.clusters.n_clusters(),
                              mmcar_random_part(md, st));
        out.tau_gamma.push_back(st.tau_gamma);
        out.client_effects.push_back(client_matrix(st.clusters));
        out.gamma_uni.push_back(st.gamma);
        out.assignment.push_back(st.clusters.assignment);
      }
      break;
    }
    case ModelKind::mmmv: {
      MmMvState st = init_mmmv(md, cfg);
      for (int iter = 1; iter <= cfg.n_iter; ++iter) {
        try {
          sweep_mmmv(st, md, cfg, rng);
        } catch (const std::exception& e) {
          throw ChainError(iter, e.what());
        }
        if (!kept(iter)) continue;
        detail::record_common(out, chain_id, iter, md, st.fe, st.tau_eps,
                              st.lambda, st.clusters.alpha,
                              st.clusters.n_clusters(),
                              mmmv_random_part(md, st));
        out.client_effects.push_back(client_matrix(st.clusters));
        out.gamma_mv.push_back(st.gamma);
        out.assignment.push_back(st.clusters.assignment);
      }
      break;
    }
    case ModelKind::ddp: {
      DdpState st = init_ddp(md, cfg);
      const DdpDesign dd = build_ddp_design(md);
      for (int iter = 1; iter <= cfg.n_iter; ++iter) {
        try {
          sweep_ddp(st, md, dd, cfg, rng);
        } catch (const std::exception& e) {
          throw ChainError(iter, e.what());
        }
        if (!kept(iter)) continue;
        detail::record_common(out, chain_id, iter, md, st.fe, st.tau_eps,
                              st.lambda, st.clusters.alpha,
                              st.clusters.n_clusters(),
                              ddp_random_part(md, st, dd));
        out.rho.push_back(st.rho);
        Eigen::MatrixXd theta(md.n, kQ);
        for (int i = 0; i < md.n; ++i)
          theta.row(i) =
              ddp_theta(st.clusters.locations[st.clusters.assignment[i]],
                        dd.nz[i], dd.nzv[i], md.S)
                  .transpose();
        out.client_effects.push_back(theta);
        std::vector<Eigen::MatrixXd> locs;
        locs.reserve(st.clusters.locations.size());
        for (const auto& loc : st.clusters.locations)
          locs.push_back(ddp_location_matrix(loc, md.S));
        out.ddp_locations.push_back(std::move(locs));
        out.assignment.push_back(st.clusters.assignment);
      }
      break;
    }
  }
  return out;
}

inline ChainOutput run_chain(ModelKind model, const MMDataset& ds,
                             SamplerConfig cfg, RngStream& rng) {
  cfg.model = model;
  return run_chain(ds, cfg, rng);
}

// One stream per chain: chain c uses RngStream(seed, c), c = 1..n_chains.
// Chains are dispatched to a small thread pool; outputs come back ordered by
// chain id.
inline std::vector<ChainOutput> run_chains(const MMDataset& ds,
                                           const SamplerConfig& cfg,
                                           int max_threads = 0) {
  cfg.validate();
  const int n_chains = cfg.n_chains;
  std::vector<ChainOutput> outputs(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  const int hw = max_threads > 0
                     ? max_threads
                     : static_cast<int>(std::thread::hardware_concurrency());
  const int pool = std::max(1, std::min(n_chains, hw));
  std::vector<std::thread> workers;
  std::atomic<int> next{0};
  for (int w = 0; w < pool; ++w)
    workers.emplace_back([&] {
      for (;;) {
        const int c = next.fetch_add(1);
        if (c >= n_chains) return;
        try {
          RngStream rng(cfg.seed, static_cast<std::uint64_t>(c) + 1);
          outputs[c] = run_chain(ds, cfg, rng);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return outputs;
}

}  // namespace mmgc
