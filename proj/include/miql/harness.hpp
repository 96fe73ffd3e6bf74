#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "miql/agents.hpp"
#include "miql/config.hpp"
#include "miql/format.hpp"
#include "miql/gridworld.hpp"
#include "miql/missingness.hpp"
#include "miql/rng.hpp"

namespace miql {

struct MetricRow {
  long t = 0;
  long episodes_completed = 0;
  double cum_mean_reward = 0.0;
  double cum_mean_river_steps = 0.0;
  double cum_mean_path_length = 0.0;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// Per-episode totals folded into cumulative means over completed episodes.
class MetricsAccumulator {
 public:
  void step(double reward, bool in_water) {
    ep_reward_ += reward;
    ep_river_ += in_water ? 1 : 0;
    ++ep_length_;
  }

  /// Closes the current episode (terminal or capped).
  void end_episode() {
    ++episodes_;
    sum_reward_ += ep_reward_;
    sum_river_ += static_cast<double>(ep_river_);
    sum_length_ += static_cast<double>(ep_length_);
    episode_rewards_.push_back(ep_reward_);
    ep_reward_ = 0.0;
    ep_river_ = 0;
    ep_length_ = 0;
  }

  /// Means are NaN until the first episode completes.
  MetricRow row(long t) const {
    MetricRow r;
    r.t = t;
    r.episodes_completed = episodes_;
    const double n = static_cast<double>(episodes_);
    r.cum_mean_reward = episodes_ ? sum_reward_ / n : std::nan("");
    r.cum_mean_river_steps = episodes_ ? sum_river_ / n : std::nan("");
    r.cum_mean_path_length = episodes_ ? sum_length_ / n : std::nan("");
    return r;
  }

  long episodes() const noexcept { return episodes_; }
  const std::vector<double>& episode_rewards() const noexcept { return episode_rewards_; }

 private:
  long episodes_ = 0;
  double sum_reward_ = 0.0;
  double sum_river_ = 0.0;
  double sum_length_ = 0.0;
  double ep_reward_ = 0.0;
  long ep_river_ = 0;
  long ep_length_ = 0;
  std::vector<double> episode_rewards_;
};

struct TrialSummary {
  long episodes_completed = 0;
  double mean_reward = 0.0;
  double mean_river_steps = 0.0;
  double mean_path_length = 0.0;
  friend bool operator==(const TrialSummary&, const TrialSummary&) = default;
};

struct TrialResult {
  std::string config_hash;
  std::string label;
  std::string group;
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  TrialSummary summary;
  long fallbacks = 0;
  std::vector<double> episode_rewards;
  std::vector<int> actions;  // filled only when requested
  std::string error;         // non-empty when the trial failed
  double wall_seconds = 0.0; // not part of any CSV

  bool ok() const noexcept { return error.empty(); }
};

/// Label plus missingness; trials in one group compete for "best".
inline std::string group_key(const RunConfig& c) { return c.agent.label() + " @ " + describe(c.missingness); }

struct TrialOptions {
  std::ostream* trace = nullptr;  // per-step CSV trace
  bool record_actions = false;
  long max_episodes = 0;          // stop early after this many episodes (0 = run to horizon)
};

inline void write_trace_header(std::ostream& os) { os << "t,obs,mask,pathways_hash,action,reward\n"; }

/// Runs one trial. Environment, missingness and agent each draw from their
/// own stream derived from `seed`. The start state and terminal arrival are
/// shown unmasked, but their masks are still drawn so streams stay aligned.
inline TrialResult run_trial(const RunConfig& config, std::uint64_t seed, const TrialOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  TrialResult res;
  res.config_hash = config_hash(config);
  res.label = config.agent.label();
  res.group = group_key(config);
  res.seed = seed;

  Rng env_rng(derive_seed(seed, Stream::Environment));
  Rng miss_rng(derive_seed(seed, Stream::Missingness));
  GridWorld world(config.layout, config.env);
  const auto& layout = world.layout();
  Agent agent(config.agent, layout.width(), layout.height(), static_cast<int>(world.actions().size()),
              Rng(derive_seed(seed, Stream::Agent)));
  MetricsAccumulator metrics;

  auto start_episode = [&] {
    const FullState s = world.reset();
    (void)sample_mask(config.missingness, s, layout, miss_rng);
    return agent.begin_episode(observe_full(s));
  };

  int action = start_episode();
  res.rows.reserve(static_cast<std::size_t>(config.horizon / config.sample_every));
  for (long t = 1; t <= config.horizon; ++t) {
    if (opt.record_actions) res.actions.push_back(action);
    const StepOutcome out = world.step(static_cast<std::size_t>(action), env_rng);
    const Mask mask = sample_mask(config.missingness, out.next_state, layout, miss_rng);
    const ObservedState obs = out.terminal ? observe_full(out.next_state) : apply_mask(out.next_state, mask);
    metrics.step(out.reward, out.in_water);
    const int next = agent.observe(obs, out.reward, out.terminal);
    if (opt.trace) {
      *opt.trace << t << ',' << to_string(obs) << ',' << obs.mask().bits[0] << obs.mask().bits[1] << obs.mask().bits[2]
                 << ',' << agent.pathways_hash() << ',' << action << ',' << format_double(out.reward) << '\n';
    }
    if (out.terminal || out.truncated) {
      metrics.end_episode();
      if (opt.max_episodes > 0 && metrics.episodes() >= opt.max_episodes) {
        res.rows.push_back(metrics.row(t));
        break;
      }
      action = start_episode();
    } else {
      action = next;
    }
    if (t % config.sample_every == 0) res.rows.push_back(metrics.row(t));
  }

  const MetricRow last = metrics.row(config.horizon);
  res.summary = {last.episodes_completed, last.cum_mean_reward, last.cum_mean_river_steps, last.cum_mean_path_length};
  res.fallbacks = agent.memory().fallbacks;
  res.episode_rewards = metrics.episode_rewards();
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

struct SweepJob {
  const RunConfig* config = nullptr;
  std::uint64_t seed = 0;
};

/// Runs every (config, seed) pair over a pool of `workers` threads. Results
/// come back in job order. A failing trial is recorded and the sweep goes on.
inline std::vector<TrialResult> run_sweep(const std::vector<RunConfig>& grid, int workers) {
  std::vector<SweepJob> jobs;
  for (const auto& c : grid)
    for (const auto s : c.trial_seeds()) jobs.push_back({&c, s});
  std::vector<TrialResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_trial(*jobs[i].config, jobs[i].seed);
      } catch (const std::exception& e) {
        TrialResult r;
        r.config_hash = config_hash(*jobs[i].config);
        r.label = jobs[i].config->agent.label();
        r.group = group_key(*jobs[i].config);
        r.seed = jobs[i].seed;
        r.error = e.what();
        results[i] = std::move(r);
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return results;
}

// ---------------------------------------------------------------------------
// Grid specs

namespace harness_detail {

inline json::json_pointer pointer_for(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("grid: empty path segment in '" + dotted + "'");
    p += "/" + part;
  }
  return json::json_pointer(p);
}

}  // namespace harness_detail

struct GridSpec {
  json base;
  std::vector<std::pair<std::string, std::vector<json>>> axes;  // dotted path -> values
  std::vector<json> variants;                                  // merge patches applied to base
  std::string curve_x;                                         // dotted path for curve.csv, optional
};

inline GridSpec parse_grid_spec(const json& j) {
  if (!j.is_object()) throw ConfigError("grid spec: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "schema_version" && k != "base" && k != "grid" && k != "variants" && k != "curve")
      throw ConfigError(k + ": unknown key in grid spec");
  }
  if (!j.contains("schema_version") || j.at("schema_version") != kSchemaVersion)
    throw ConfigError("schema_version: required and must equal " + std::to_string(kSchemaVersion));
  if (!j.contains("base") || !j.at("base").is_object()) throw ConfigError("base: required object");
  GridSpec g;
  g.base = j.at("base");
  if (j.contains("grid")) {
    if (!j.at("grid").is_object()) throw ConfigError("grid: must map dotted paths to value lists");
    for (auto it = j.at("grid").begin(); it != j.at("grid").end(); ++it) {
      if (!it.value().is_array() || it.value().empty()) throw ConfigError("grid." + it.key() + ": must be a non-empty list");
      g.axes.emplace_back(it.key(), std::vector<json>(it.value().begin(), it.value().end()));
    }
  }
  if (j.contains("variants")) {
    if (!j.at("variants").is_array()) throw ConfigError("variants: must be a list of objects");
    for (const auto& v : j.at("variants")) {
      if (!v.is_object()) throw ConfigError("variants: must be a list of objects");
      g.variants.push_back(v);
    }
  }
  if (j.contains("curve")) {
    const auto& c = j.at("curve");
    if (!c.is_object() || !c.contains("x") || !c.at("x").is_string()) throw ConfigError("curve.x: must be a dotted path string");
    g.curve_x = c.at("x").get<std::string>();
  }
  return g;
}

struct ExpandedGrid {
  std::vector<RunConfig> configs;
  std::vector<json> raw;  // the JSON each config came from
  long duplicates = 0;    // combinations that hashed to an existing config
};

/// Cartesian product of the axes, for every variant (or the base alone).
inline ExpandedGrid expand_grid(const GridSpec& g) {
  ExpandedGrid out;
  std::set<std::string> seen;
  const std::vector<json> variants = g.variants.empty() ? std::vector<json>{json::object()} : g.variants;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    json base = g.base;
    base.merge_patch(variants[vi]);
    std::vector<std::size_t> idx(g.axes.size(), 0);
    while (true) {
      json j = base;
      for (std::size_t a = 0; a < g.axes.size(); ++a) j[harness_detail::pointer_for(g.axes[a].first)] = g.axes[a].second[idx[a]];
      RunConfig c;
      try {
        c = parse_run_config(j);
      } catch (const ConfigError& e) {
        throw ConfigError("variant " + std::to_string(vi) + ": " + e.what());
      }
      if (seen.insert(config_hash(c)).second) {
        out.configs.push_back(std::move(c));
        out.raw.push_back(j);
      } else {
        ++out.duplicates;
      }
      std::size_t a = 0;
      for (; a < idx.size(); ++a) {
        if (++idx[a] < g.axes[a].second.size()) break;
        idx[a] = 0;
      }
      if (a == idx.size()) break;
    }
  }
  return out;
}

/// Aggregate of one configuration over its seeds.
struct ConfigAggregate {
  std::string group;
  std::string label;
  std::string config_hash;
  std::size_t config_index = 0;
  int trials = 0;
  int failed = 0;
  double mean_reward = 0.0, se_reward = 0.0;
  double mean_river = 0.0, se_river = 0.0;
  double mean_path = 0.0, se_path = 0.0;
  std::vector<double> rewards;  // per-seed final mean reward
};

namespace harness_detail {
inline void mean_se(const std::vector<double>& v, double& mean, double& se) {
  mean = 0.0;
  se = 0.0;
  if (v.empty()) {
    mean = std::nan("");
    return;
  }
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}
}  // namespace harness_detail

/// Results are in run_sweep order: config-major, seed-minor.
inline std::vector<ConfigAggregate> aggregate(const std::vector<RunConfig>& grid, const std::vector<TrialResult>& results) {
  std::vector<ConfigAggregate> out;
  std::size_t i = 0;
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    ConfigAggregate a;
    a.group = group_key(grid[ci]);
    a.label = grid[ci].agent.label();
    a.config_hash = config_hash(grid[ci]);
    a.config_index = ci;
    std::vector<double> river, path;
    for (std::size_t s = 0; s < grid[ci].trial_seeds().size(); ++s, ++i) {
      const auto& r = results.at(i);
      ++a.trials;
      if (!r.ok() || r.summary.episodes_completed == 0) {
        ++a.failed;
        continue;
      }
      a.rewards.push_back(r.summary.mean_reward);
      river.push_back(r.summary.mean_river_steps);
      path.push_back(r.summary.mean_path_length);
    }
    harness_detail::mean_se(a.rewards, a.mean_reward, a.se_reward);
    harness_detail::mean_se(river, a.mean_river, a.se_river);
    harness_detail::mean_se(path, a.mean_path, a.se_path);
    out.push_back(std::move(a));
  }
  return out;
}

/// Highest mean final reward per group; ties keep the earliest config.
/// Groups appear in first-seen order.
inline std::vector<ConfigAggregate> best_per_group(const std::vector<ConfigAggregate>& aggs) {
  std::vector<ConfigAggregate> best;
  std::map<std::string, std::size_t> where;
  for (const auto& a : aggs) {
    if (a.rewards.empty()) continue;
    auto it = where.find(a.group);
    if (it == where.end()) {
      where[a.group] = best.size();
      best.push_back(a);
    } else if (a.mean_reward > best[it->second].mean_reward) {
      best[it->second] = a;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kMetricsHeader =
    "config_hash,label,seed,t,episodes_completed,cum_mean_reward,cum_mean_river_steps,cum_mean_path_length";

namespace harness_detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  return os;
}

inline void close_out(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}
}  // namespace harness_detail

inline void write_metrics_csv(std::ostream& os, const std::vector<TrialResult>& results) {
  os << kMetricsHeader << '\n';
  for (const auto& r : results) {
    for (const auto& row : r.rows) {
      os << r.config_hash << ',' << harness_detail::csv_field(r.label) << ',' << r.seed << ',' << row.t << ','
         << row.episodes_completed << ',' << format_double(row.cum_mean_reward) << ','
         << format_double(row.cum_mean_river_steps) << ',' << format_double(row.cum_mean_path_length) << '\n';
    }
  }
}

inline void write_csv(const std::vector<TrialResult>& results, const std::filesystem::path& path) {
  auto os = harness_detail::open_out(path);
  write_metrics_csv(os, results);
  harness_detail::close_out(os, path);
}

/// Row of a metrics CSV, as read back.
struct MetricRecord {
  std::string config_hash;
  std::string label;
  std::uint64_t seed = 0;
  MetricRow row;
};

inline std::vector<MetricRecord> read_metrics_csv(std::istream& is, const std::string& name = "metrics csv") {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) throw std::runtime_error(name + ": unexpected header");
  std::vector<MetricRecord> out;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = harness_detail::split_csv_line(line);
    if (f.size() != 8) throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected 8 fields");
    try {
      MetricRecord r;
      r.config_hash = f[0];
      r.label = f[1];
      r.seed = std::stoull(f[2]);
      r.row.t = std::stol(f[3]);
      r.row.episodes_completed = std::stol(f[4]);
      r.row.cum_mean_reward = parse_double(f[5]);
      r.row.cum_mean_river_steps = parse_double(f[6]);
      r.row.cum_mean_path_length = parse_double(f[7]);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<MetricRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path.string() + ": cannot open");
  return read_metrics_csv(is, path.string());
}

inline void write_summary_csv(std::ostream& os, const std::vector<TrialResult>& results) {
  os << "config_hash,label,group,seed,episodes_completed,mean_reward,mean_river_steps,mean_path_length,fallbacks,status\n";
  for (const auto& r : results) {
    os << r.config_hash << ',' << harness_detail::csv_field(r.label) << ',' << harness_detail::csv_field(r.group) << ','
       << r.seed << ',' << r.summary.episodes_completed << ',' << format_double(r.summary.mean_reward) << ','
       << format_double(r.summary.mean_river_steps) << ',' << format_double(r.summary.mean_path_length) << ','
       << r.fallbacks << ',' << harness_detail::csv_field(r.ok() ? "ok" : "error: " + r.error) << '\n';
  }
}

inline void write_best_csv(std::ostream& os, const std::vector<ConfigAggregate>& best) {
  os << "group,label,config_hash,trials,failed,mean_reward,se_reward,mean_river_steps,se_river_steps,mean_path_length,se_path_length\n";
  for (const auto& b : best) {
    os << harness_detail::csv_field(b.group) << ',' << harness_detail::csv_field(b.label) << ',' << b.config_hash << ','
       << b.trials << ',' << b.failed << ',' << format_double(b.mean_reward) << ',' << format_double(b.se_reward) << ','
       << format_double(b.mean_river) << ',' << format_double(b.se_river) << ',' << format_double(b.mean_path) << ','
       << format_double(b.se_path) << '\n';
  }
}

inline constexpr const char* kCurveHeader = "series,x,mean_reward,se_reward,mean_river_steps,mean_path_length";

/// One point per best group; x is the value at the curve path in its config.
inline void write_curve_csv(std::ostream& os, const std::vector<ConfigAggregate>& best, const std::vector<json>& raw,
                            const std::string& x_path) {
  const auto ptr = harness_detail::pointer_for(x_path);
  struct Point {
    std::string series;
    double x;
    const ConfigAggregate* b;
  };
  std::vector<Point> pts;
  for (const auto& b : best) {
    const json& j = raw.at(b.config_index);
    if (!j.contains(ptr) || !j.at(ptr).is_number()) throw ConfigError("curve.x: '" + x_path + "' is not a number in every config");
    pts.push_back({b.label, j.at(ptr).get<double>(), &b});
  }
  std::stable_sort(pts.begin(), pts.end(), [](const Point& l, const Point& r) {
    return l.series != r.series ? l.series < r.series : l.x < r.x;
  });
  os << kCurveHeader << '\n';
  for (const auto& p : pts)
    os << harness_detail::csv_field(p.series) << ',' << format_double(p.x) << ',' << format_double(p.b->mean_reward) << ','
       << format_double(p.b->se_reward) << ',' << format_double(p.b->mean_river) << ',' << format_double(p.b->mean_path) << '\n';
}

/// Writes metrics.csv, summary.csv, best.csv, best_metrics.csv, configs.jsonl
/// and (with a curve path) curve.csv under `dir`.
inline std::vector<ConfigAggregate> write_sweep_outputs(const std::filesystem::path& dir, const std::vector<RunConfig>& grid,
                                                        const std::vector<json>& raw, const std::vector<TrialResult>& results,
                                                        const std::string& curve_x = "") {
  using harness_detail::close_out;
  using harness_detail::open_out;
  const auto aggs = aggregate(grid, results);
  const auto best = best_per_group(aggs);
  {
    auto os = open_out(dir / "metrics.csv");
    write_metrics_csv(os, results);
    close_out(os, dir / "metrics.csv");
  }
  {
    auto os = open_out(dir / "summary.csv");
    write_summary_csv(os, results);
    close_out(os, dir / "summary.csv");
  }
  {
    auto os = open_out(dir / "best.csv");
    write_best_csv(os, best);
    close_out(os, dir / "best.csv");
  }
  {
    std::set<std::string> keep;
    for (const auto& b : best) keep.insert(b.config_hash);
    std::vector<TrialResult> chosen;
    for (const auto& r : results)
      if (keep.count(r.config_hash)) chosen.push_back(r);
    auto os = open_out(dir / "best_metrics.csv");
    write_metrics_csv(os, chosen);
    close_out(os, dir / "best_metrics.csv");
  }
  {
    auto os = open_out(dir / "configs.jsonl");
    for (const auto& c : grid) os << json{{"config_hash", config_hash(c)}, {"config", to_json(c, true)}}.dump() << '\n';
    close_out(os, dir / "configs.jsonl");
  }
  if (!curve_x.empty()) {
    auto os = open_out(dir / "curve.csv");
    write_curve_csv(os, best, raw, curve_x);
    close_out(os, dir / "curve.csv");
  }
  return best;
}

}  // namespace miql
