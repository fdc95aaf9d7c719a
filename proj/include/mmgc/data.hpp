#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmgc/csv.hpp"

namespace mmgc {

struct Observation {
  int client = 0;       // internal index
  double time = 0.0;    // months
  int wave = 0;         // kept for deduplication only
  double outcome = 0.0;
};

// Repeated-measures multiple-membership dataset. Modules are held in a
// canonical order sorted by (group, order_in_group) so that group blocks are
// contiguous; observations are sorted by (client, time, wave). Immutable
// after construction and safe to share across threads.
struct MMDataset {
  int n_clients = 0;
  int n_modules = 0;
  int n_groups = 0;

  std::vector<long> client_ids;   // internal -> file id
  std::vector<long> module_ids;   // internal -> file id, canonical order
  std::vector<long> group_ids;    // internal group -> file id
  std::vector<int> module_group;  // per module, 0-based group
  std::vector<int> module_order;  // per module, order_in_group as given
  std::vector<std::pair<int, int>> group_blocks;  // (offset, size)

  std::vector<int> treatment;                 // per client, 0/1
  std::vector<std::vector<int>> attendance;   // per client, internal module idx
  Eigen::MatrixXd weights_add;                // n x S, rows sum to 1 or 0
  Eigen::MatrixXd weights_ddp;                // n x (S+1), leading 1 column

  std::vector<Observation> observations;
  std::vector<int> client_obs_offset;  // size n+1

  // CBT clients with no attendance rows; weighted as usual care (all-zero MM
  // weights) and surfaced for inspection.
  std::vector<int> flagged_cbt_without_attendance;

  int n_obs() const { return static_cast<int>(observations.size()); }
  int obs_count(int client) const {
    return client_obs_offset[client + 1] - client_obs_offset[client];
  }
};

// Deterministic MM weight rows from attendance sets: equal weight 1/|set| on
// attended modules, zero otherwise; the DDP form prepends a constant 1.
inline Eigen::MatrixXd build_weights(
    const std::vector<std::vector<int>>& attendance, int n_modules,
    bool ddp_form) {
  const int n = static_cast<int>(attendance.size());
  const int cols = ddp_form ? n_modules + 1 : n_modules;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, cols);
  for (int i = 0; i < n; ++i) {
    if (ddp_form) w(i, 0) = 1.0;
    if (attendance[i].empty()) continue;
    const double share = 1.0 / static_cast<double>(attendance[i].size());
    for (int s : attendance[i]) {
      if (s < 0 || s >= n_modules)
        throw std::out_of_range("build_weights: module index out of range");
      w(i, (ddp_form ? 1 : 0) + s) = share;
    }
  }
  return w;
}

namespace detail {

inline void finalize_dataset(MMDataset& ds) {
  const int n = ds.n_clients;
  std::sort(ds.observations.begin(), ds.observations.end(),
            [](const Observation& a, const Observation& b) {
              if (a.client != b.client) return a.client < b.client;
              if (a.time != b.time) return a.time < b.time;
              return a.wave < b.wave;
            });
  ds.client_obs_offset.assign(n + 1, 0);
  for (const auto& o : ds.observations) ds.client_obs_offset[o.client + 1]++;
  for (int i = 0; i < n; ++i)
    ds.client_obs_offset[i + 1] += ds.client_obs_offset[i];

  for (auto& a : ds.attendance) std::sort(a.begin(), a.end());
  ds.weights_add = build_weights(ds.attendance, ds.n_modules, false);
  ds.weights_ddp = build_weights(ds.attendance, ds.n_modules, true);

  ds.flagged_cbt_without_attendance.clear();
  for (int i = 0; i < n; ++i)
    if (ds.treatment[i] == 1 && ds.attendance[i].empty())
      ds.flagged_cbt_without_attendance.push_back(i);
}

}  // namespace detail

inline MMDataset load_dataset(const std::filesystem::path& outcomes_path,
                              const std::filesystem::path& attendance_path,
                              const std::filesystem::path& modules_path) {
  MMDataset ds;

  // modules.csv: module_id,group_id,order_in_group
  {
    auto t = csv::read_file(modules_path);
    const int cm = t.column("module_id");
    const int cg = t.column("group_id");
    const int co = t.column("order_in_group");
    struct Row {
      long module_id, group_id, order;
    };
    std::vector<Row> rows;
    std::set<long> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string ctx =
          modules_path.filename().string() + ":" + std::to_string(t.line_no[r]);
      Row row{csv::parse_int(t.rows[r][cm], ctx),
              csv::parse_int(t.rows[r][cg], ctx),
              csv::parse_int(t.rows[r][co], ctx)};
      if (!seen.insert(row.module_id).second)
        throw std::runtime_error(ctx + ": duplicate module_id " +
                                 std::to_string(row.module_id));
      rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.group_id != b.group_id) return a.group_id < b.group_id;
      return a.order < b.order;
    });
    ds.n_modules = static_cast<int>(rows.size());
    std::map<long, int> group_index;
    for (const auto& row : rows) {
      if (!group_index.count(row.group_id)) {
        group_index[row.group_id] = static_cast<int>(ds.group_ids.size());
        ds.group_ids.push_back(row.group_id);
      }
      ds.module_ids.push_back(row.module_id);
      ds.module_group.push_back(group_index[row.group_id]);
      ds.module_order.push_back(static_cast<int>(row.order));
    }
    ds.n_groups = static_cast<int>(ds.group_ids.size());
    for (int g = 0; g < ds.n_groups; ++g) {
      int off = 0;
      while (off < ds.n_modules && ds.module_group[off] != g) ++off;
      int size = 0;
      while (off + size < ds.n_modules && ds.module_group[off + size] == g)
        ++size;
      ds.group_blocks.emplace_back(off, size);
    }
    for (int g = 0; g < ds.n_groups; ++g) {
      auto [off, size] = ds.group_blocks[g];
      std::set<int> orders;
      for (int s = off; s < off + size; ++s)
        if (!orders.insert(ds.module_order[s]).second)
          throw std::runtime_error(
              modules_path.filename().string() +
              ": duplicate order_in_group within group " +
              std::to_string(ds.group_ids[g]));
    }
  }

  std::map<long, int> module_index;
  for (int s = 0; s < ds.n_modules; ++s) module_index[ds.module_ids[s]] = s;

  // outcomes.csv: client_id,treatment,time_months,wave,outcome
  std::map<long, int> client_index;
  {
    auto t = csv::read_file(outcomes_path);
    const int cc = t.column("client_id");
    const int ct = t.column("treatment");
    const int cti = t.column("time_months");
    const int cw = t.column("wave");
    const int cy = t.column("outcome");
    std::vector<long> order_of_appearance;
    struct Raw {
      long client_id;
      int treatment, wave;
      double time, outcome;
    };
    std::vector<Raw> raws;
    std::set<std::pair<long, int>> wave_seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string ctx =
          outcomes_path.filename().string() + ":" + std::to_string(t.line_no[r]);
      Raw raw;
      raw.client_id = csv::parse_int(t.rows[r][cc], ctx);
      raw.treatment = static_cast<int>(csv::parse_int(t.rows[r][ct], ctx));
      raw.time = csv::parse_real(t.rows[r][cti], ctx);
      raw.wave = static_cast<int>(csv::parse_int(t.rows[r][cw], ctx));
      raw.outcome = csv::parse_real(t.rows[r][cy], ctx);
      if (raw.treatment != 0 && raw.treatment != 1)
        throw std::runtime_error(ctx + ": treatment must be 0 or 1");
      if (raw.time < 0.0)
        throw std::runtime_error(ctx + ": time_months must be >= 0");
      if (!wave_seen.insert({raw.client_id, raw.wave}).second)
        throw std::runtime_error(ctx + ": duplicate (client, wave) pair (" +
                                 std::to_string(raw.client_id) + ", " +
                                 std::to_string(raw.wave) + ")");
      if (!client_index.count(raw.client_id)) {
        client_index[raw.client_id] = 0;  // placeholder, renumbered below
        order_of_appearance.push_back(raw.client_id);
      }
      raws.push_back(raw);
    }
    std::sort(order_of_appearance.begin(), order_of_appearance.end());
    for (std::size_t k = 0; k < order_of_appearance.size(); ++k)
      client_index[order_of_appearance[k]] = static_cast<int>(k);
    ds.client_ids = order_of_appearance;
    ds.n_clients = static_cast<int>(ds.client_ids.size());
    ds.treatment.assign(ds.n_clients, -1);
    for (const auto& raw : raws) {
      const int i = client_index[raw.client_id];
      if (ds.treatment[i] == -1) {
        ds.treatment[i] = raw.treatment;
      } else if (ds.treatment[i] != raw.treatment) {
        throw std::runtime_error(outcomes_path.filename().string() +
                                 ": client " + std::to_string(raw.client_id) +
                                 " has inconsistent treatment indicators");
      }
      ds.observations.push_back(
          Observation{i, raw.time, raw.wave, raw.outcome});
    }
    if (ds.n_clients == 0)
      throw std::runtime_error(outcomes_path.string() + ": no observations");
  }

  // attendance.csv: client_id,module_id
  ds.attendance.assign(ds.n_clients, {});
  {
    auto t = csv::read_file(attendance_path);
    const int cc = t.column("client_id");
    const int cm = t.column("module_id");
    std::set<std::pair<long, long>> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string ctx = attendance_path.filename().string() + ":" +
                              std::to_string(t.line_no[r]);
      const long client_id = csv::parse_int(t.rows[r][cc], ctx);
      const long module_id = csv::parse_int(t.rows[r][cm], ctx);
      auto ci = client_index.find(client_id);
      if (ci == client_index.end())
        throw std::runtime_error(ctx + ": client " + std::to_string(client_id) +
                                 " has no outcome rows");
      auto mi = module_index.find(module_id);
      if (mi == module_index.end())
        throw std::runtime_error(ctx + ": unknown module " +
                                 std::to_string(module_id));
      if (!seen.insert({client_id, module_id}).second)
        throw std::runtime_error(ctx + ": duplicate attendance row");
      ds.attendance[ci->second].push_back(mi->second);
    }
  }

  // Every module needs at least one attending client.
  {
    std::vector<int> attendees(ds.n_modules, 0);
    for (const auto& a : ds.attendance)
      for (int s : a) attendees[s]++;
    for (int s = 0; s < ds.n_modules; ++s)
      if (attendees[s] == 0)
        throw std::runtime_error("module " + std::to_string(ds.module_ids[s]) +
                                 " has no attending clients");
  }

  detail::finalize_dataset(ds);
  return ds;
}

inline void write_dataset(const std::filesystem::path& dir,
                          const MMDataset& ds) {
  std::filesystem::create_directories(dir);
  {
    csv::Writer w(dir / "outcomes.csv");
    w.row("client_id", "treatment", "time_months", "wave", "outcome");
    for (const auto& o : ds.observations)
      w.row(ds.client_ids[o.client], ds.treatment[o.client], o.time, o.wave,
            o.outcome);
  }
  {
    csv::Writer w(dir / "attendance.csv");
    w.row("client_id", "module_id");
    for (int i = 0; i < ds.n_clients; ++i)
      for (int s : ds.attendance[i]) w.row(ds.client_ids[i], ds.module_ids[s]);
  }
  {
    csv::Writer w(dir / "modules.csv");
    w.row("module_id", "group_id", "order_in_group");
    for (int s = 0; s < ds.n_modules; ++s)
      w.row(ds.module_ids[s], ds.group_ids[ds.module_group[s]],
            ds.module_order[s]);
  }
}

inline MMDataset load_dataset(const std::filesystem::path& dir) {
  return load_dataset(dir / "outcomes.csv", dir / "attendance.csv",
                      dir / "modules.csv");
}

}  // namespace mmgc
