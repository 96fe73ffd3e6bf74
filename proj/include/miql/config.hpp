#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "miql/agents.hpp"
#include "miql/gridworld.hpp"
#include "miql/missingness.hpp"

namespace miql {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  GridLayout layout = GridLayout::standard();
  bool custom_layout = false;
  EnvParams env{};
  MissingnessSpec missingness = Mcar{};
  AgentConfig agent{};
  long horizon = 50000;
  int trials = 5;
  std::uint64_t base_seed = 1;
  std::vector<std::uint64_t> seeds;  // explicit list; empty means base_seed + i
  long sample_every = 100;
  bool trace = false;
  std::string output_dir = "out";

  std::vector<std::uint64_t> trial_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> s;
    for (int i = 0; i < trials; ++i) s.push_back(base_seed + static_cast<std::uint64_t>(i));
    return s;
  }

  void validate() const {
    env.validate();
    miql::validate(missingness);
    agent.validate();
    if (horizon < 1) throw ConfigError("horizon: must be >= 1");
    if (trials < 1) throw ConfigError("trials: must be >= 1");
    if (sample_every < 1) throw ConfigError("sample_every: must be >= 1");
  }
};

namespace config_detail {

inline std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(join(where, it.key()) + ": unknown key");
}

inline const json& object_at(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(join(where, key) + ": required section is missing");
  if (!j.at(key).is_object()) throw ConfigError(join(where, key) + ": must be an object");
  return j.at(key);
}

inline double get_number(const json& j, const std::string& key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(where, key) + ": must be a number");
  return v.get<double>();
}

inline long get_integer(const json& j, const std::string& key, const std::string& where, long fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long>(v.get<double>())))
    return static_cast<long>(v.get<double>());
  throw ConfigError(join(where, key) + ": must be an integer");
}

inline bool get_bool(const json& j, const std::string& key, const std::string& where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(join(where, key) + ": must be true or false");
  return j.at(key).get<bool>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& where, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw ConfigError(join(where, key) + ": must be a string");
  return j.at(key).get<std::string>();
}

inline Cell get_cell(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw ConfigError(field + ": cell must be [x, y]");
  return {v[0].get<int>(), v[1].get<int>()};
}

inline std::vector<Cell> get_cells(const json& j, const std::string& key, const std::string& where) {
  std::vector<Cell> out;
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(join(where, key) + ": must be a list of [x, y] cells");
  for (const auto& c : v) out.push_back(get_cell(c, join(where, key)));
  return out;
}

inline json cells_json(const std::vector<Cell>& cells) {
  json a = json::array();
  for (const auto& c : cells) a.push_back({c.x, c.y});
  return a;
}

inline Method parse_method(const std::string& s) {
  if (s == "mi") return Method::MultipleImputation;
  if (s == "si") return Method::SingleImputation;
  if (s == "random_action") return Method::RandomAction;
  if (s == "last_observed_v1") return Method::LastObservedV1;
  if (s == "last_observed_v2") return Method::LastObservedV2;
  if (s == "missing_as_state") return Method::MissingAsState;
  if (s == "standard_q") return Method::StandardQ;
  throw ConfigError("agent.method: unknown method '" + s +
                    "' (expected mi, si, random_action, last_observed_v1, last_observed_v2, missing_as_state, standard_q)");
}

inline TUpdate parse_t_update(const std::string& s) {
  if (s == "synthetic") return TUpdate::Synthetic;
  if (s == "conservative") return TUpdate::Conservative;
  throw ConfigError("agent.t_update: expected synthetic or conservative, got '" + s + "'");
}

inline void parse_env(const json& e, RunConfig& cfg) {
  const std::string w = "env";
  reject_unknown(e, w, {"width", "height", "start", "terminal", "base_water", "flood_extra_water", "fog_region",
                        "wind_prob", "flood_prob", "episode_cap", "stay_in_place"});
  cfg.env.wind_prob = get_number(e, "wind_prob", w, cfg.env.wind_prob);
  cfg.env.flood_prob = get_number(e, "flood_prob", w, cfg.env.flood_prob);
  cfg.env.episode_cap = get_integer(e, "episode_cap", w, cfg.env.episode_cap);
  cfg.env.stay_in_place = get_bool(e, "stay_in_place", w, cfg.env.stay_in_place);
  const bool any_layout = e.contains("width") || e.contains("height") || e.contains("start") || e.contains("terminal") ||
                          e.contains("base_water") || e.contains("flood_extra_water") || e.contains("fog_region");
  if (any_layout) {
    for (const char* k : {"width", "height", "start", "terminal"})
      if (!e.contains(k)) throw ConfigError(join(w, k) + ": required when any layout field is given");
    cfg.layout = GridLayout(static_cast<int>(get_integer(e, "width", w, 8)), static_cast<int>(get_integer(e, "height", w, 8)),
                            get_cell(e.at("start"), "env.start"), get_cell(e.at("terminal"), "env.terminal"),
                            get_cells(e, "base_water", w), get_cells(e, "flood_extra_water", w), get_cells(e, "fog_region", w));
    cfg.custom_layout = true;
  }
}

inline MissingnessSpec parse_missingness(const json& m) {
  const std::string w = "missingness";
  const std::string type = get_string(m, "type", w, "");
  if (type == "mcar") {
    reject_unknown(m, w, {"type", "theta"});
    if (!m.contains("theta")) throw ConfigError("missingness.theta: required for mcar");
    Mcar s;
    const auto& t = m.at("theta");
    if (t.is_number()) {
      s.theta = {t.get<double>(), t.get<double>(), t.get<double>()};
    } else if (t.is_array() && t.size() == 3 && t[0].is_number() && t[1].is_number() && t[2].is_number()) {
      s.theta = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    } else {
      throw ConfigError("missingness.theta: must be a number or a list of three numbers");
    }
    return s;
  }
  if (type == "mcolor") {
    reject_unknown(m, w, {"type", "theta_green", "theta_orange", "theta_red", "color_observable"});
    Mcolor s;
    s.theta_green = get_number(m, "theta_green", w, 0.0);
    s.theta_orange = get_number(m, "theta_orange", w, 0.0);
    s.theta_red = get_number(m, "theta_red", w, 0.0);
    s.color_observable = get_bool(m, "color_observable", w, true);
    return s;
  }
  if (type == "mfog") {
    reject_unknown(m, w, {"type", "theta_in", "theta_out"});
    Mfog s;
    s.theta_in = get_number(m, "theta_in", w, 0.0);
    s.theta_out = get_number(m, "theta_out", w, 0.0);
    return s;
  }
  throw ConfigError("missingness.type: expected mcar, mcolor or mfog, got '" + type + "'");
}

inline AgentConfig parse_agent(const json& a) {
  const std::string w = "agent";
  reject_unknown(a, w, {"method", "t_update", "K", "alpha", "gamma", "epsilon", "p_shuffle"});
  AgentConfig c;
  c.method = parse_method(get_string(a, "method", w, "mi"));
  c.t_update = parse_t_update(get_string(a, "t_update", w, "synthetic"));
  const long k = get_integer(a, "K", w, c.method == Method::MultipleImputation ? 10 : 1);
  if (k < 1 || k > 100000) throw ConfigError("agent.K: must lie in [1, 100000]");
  c.params.K = static_cast<int>(k);
  c.params.alpha = get_number(a, "alpha", w, c.params.alpha);
  c.params.gamma = get_number(a, "gamma", w, c.params.gamma);
  c.epsilon = get_number(a, "epsilon", w, c.epsilon);
  c.p_shuffle = get_number(a, "p_shuffle", w, c.p_shuffle);
  if (!c.imputes() && c.params.K != 1) throw ConfigError("agent.K: only mi uses K > 1");
  return c;
}

}  // namespace config_detail

/// Builds a RunConfig from its JSON form. Errors name the offending field.
inline RunConfig parse_run_config(const json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(j, "", {"schema_version", "env", "missingness", "agent", "horizon", "trials", "seeds", "base_seed",
                         "sample_every", "trace", "output_dir"});
  if (!j.contains("schema_version")) throw ConfigError("schema_version: required");
  if (get_integer(j, "schema_version", "", 0) != kSchemaVersion)
    throw ConfigError("schema_version: unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  RunConfig cfg;
  if (j.contains("env")) parse_env(object_at(j, "env", ""), cfg);
  cfg.missingness = parse_missingness(object_at(j, "missingness", ""));
  cfg.agent = parse_agent(object_at(j, "agent", ""));
  cfg.horizon = get_integer(j, "horizon", "", cfg.horizon);
  cfg.trials = static_cast<int>(get_integer(j, "trials", "", cfg.trials));
  const long base = get_integer(j, "base_seed", "", 1);
  if (base < 0) throw ConfigError("base_seed: must be non-negative");
  cfg.base_seed = static_cast<std::uint64_t>(base);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds: must be a non-empty list of non-negative integers");
    for (const auto& v : s) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError("seeds: must be a non-empty list of non-negative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
    cfg.trials = static_cast<int>(cfg.seeds.size());
  }
  cfg.sample_every = get_integer(j, "sample_every", "", cfg.sample_every);
  cfg.trace = get_bool(j, "trace", "", cfg.trace);
  cfg.output_dir = get_string(j, "output_dir", "", cfg.output_dir);
  cfg.validate();
  return cfg;
}

/// Canonical JSON form. With `for_hash`, the fields that do not change a
/// trial's outcome (output location, seed choice, trace flag) are left out.
inline json to_json(const RunConfig& c, bool for_hash = false) {
  using namespace config_detail;
  json env = {{"wind_prob", c.env.wind_prob},
              {"flood_prob", c.env.flood_prob},
              {"episode_cap", c.env.episode_cap},
              {"stay_in_place", c.env.stay_in_place}};
  if (c.custom_layout) {
    env["width"] = c.layout.width();
    env["height"] = c.layout.height();
    env["start"] = {c.layout.start().x, c.layout.start().y};
    env["terminal"] = {c.layout.terminal().x, c.layout.terminal().y};
    env["base_water"] = cells_json(c.layout.base_water());
    env["flood_extra_water"] = cells_json(c.layout.flood_extra_water());
    env["fog_region"] = cells_json(c.layout.fog_region());
  }
  json miss = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Mcar>) {
          if (m.theta[0] == m.theta[1] && m.theta[1] == m.theta[2]) return {{"type", "mcar"}, {"theta", m.theta[0]}};
          return {{"type", "mcar"}, {"theta", {m.theta[0], m.theta[1], m.theta[2]}}};
        } else if constexpr (std::is_same_v<T, Mcolor>) {
          return {{"type", "mcolor"},
                  {"theta_green", m.theta_green},
                  {"theta_orange", m.theta_orange},
                  {"theta_red", m.theta_red},
                  {"color_observable", m.color_observable}};
        } else {
          return {{"type", "mfog"}, {"theta_in", m.theta_in}, {"theta_out", m.theta_out}};
        }
      },
      c.missingness);
  json agent = {{"method", to_string(c.agent.method)},
                {"K", c.agent.params.K},
                {"alpha", c.agent.params.alpha},
                {"gamma", c.agent.params.gamma},
                {"epsilon", c.agent.epsilon},
                {"p_shuffle", c.agent.p_shuffle}};
  if (c.agent.imputes()) agent["t_update"] = to_string(c.agent.t_update);
  json j = {{"schema_version", kSchemaVersion},
            {"env", env},
            {"missingness", miss},
            {"agent", agent},
            {"horizon", c.horizon},
            {"sample_every", c.sample_every}};
  if (!for_hash) {
    j["trials"] = c.trials;
    if (c.seeds.empty()) j["base_seed"] = c.base_seed;
    else j["seeds"] = c.seeds;
    j["trace"] = c.trace;
    j["output_dir"] = c.output_dir;
  }
  return j;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// 16 hex digits of FNV-1a over the canonical JSON (keys sorted by nlohmann::json).
inline std::string config_hash(const RunConfig& c) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(to_json(c, true).dump());
  return os.str();
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return parse_run_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace miql
