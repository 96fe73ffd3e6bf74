#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "miql/rng.hpp"

namespace miql {

/// Invalid user-supplied configuration. The message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Color : std::uint8_t { Green = 0, Orange = 1, Red = 2 };
inline constexpr int kColorCount = 3;

inline const char* to_string(Color c) {
  switch (c) {
    case Color::Green: return "green";
    case Color::Orange: return "orange";
    case Color::Red: return "red";
  }
  return "?";
}

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Ground-truth environment state. The color is always derived from the
/// layout and flood flag at emission time.
struct FullState {
  int x = 0;
  int y = 0;
  Color color = Color::Green;
  friend bool operator==(const FullState&, const FullState&) = default;
};

struct Action {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Action&, const Action&) = default;
};

/// Canonical action order: the eight moves counter-clockwise from "right",
/// then stay-in-place when enabled. Greedy ties resolve to the earliest entry.
inline std::vector<Action> action_set(bool stay_in_place) {
  std::vector<Action> actions{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
  if (stay_in_place) actions.push_back({0, 0});
  return actions;
}

class GridLayout {
 public:
  GridLayout(int width, int height, Cell start, Cell terminal, std::vector<Cell> base_water,
             std::vector<Cell> flood_extra_water, std::vector<Cell> fog_region)
      : width_(width),
        height_(height),
        start_(start),
        terminal_(terminal),
        base_water_(std::move(base_water)),
        flood_extra_(std::move(flood_extra_water)),
        fog_(std::move(fog_region)) {
    if (width_ < 1 || height_ < 1) throw ConfigError("env.width/env.height: grid must be at least 1x1");
    auto check = [&](const Cell& c, const std::string& field) {
      if (!in_bounds(c.x, c.y))
        throw ConfigError(field + ": cell (" + std::to_string(c.x) + "," + std::to_string(c.y) +
                          ") is out of bounds");
    };
    check(start_, "env.start");
    check(terminal_, "env.terminal");
    base_flags_.assign(cell_count(), 0);
    extra_flags_.assign(cell_count(), 0);
    fog_flags_.assign(cell_count(), 0);
    for (const auto& c : base_water_) { check(c, "env.base_water"); base_flags_[flat(c.x, c.y)] = 1; }
    for (const auto& c : flood_extra_) { check(c, "env.flood_extra_water"); extra_flags_[flat(c.x, c.y)] = 1; }
    for (const auto& c : fog_) { check(c, "env.fog_region"); fog_flags_[flat(c.x, c.y)] = 1; }
    for (const Cell& c : {start_, terminal_}) {
      if (base_flags_[flat(c.x, c.y)] || extra_flags_[flat(c.x, c.y)])
        throw ConfigError("env: start and terminal cells must not be water");
    }
    if (fog_flags_[flat(terminal_.x, terminal_.y)]) throw ConfigError("env.fog_region: must not contain the terminal cell");
    if (start_ == terminal_) throw ConfigError("env: start and terminal must differ");
  }

  /// 8x8 world: pond in columns 2..5, rows 0..4, crossed by a bridge on
  /// row 2 that floods. Fog covers the upper-right 3x3 block.
  static GridLayout standard() {
    std::vector<Cell> base, bridge, fog;
    for (int x = 2; x <= 5; ++x) {
      for (int y = 0; y <= 4; ++y) {
        if (y == 2) bridge.push_back({x, y});
        else base.push_back({x, y});
      }
    }
    for (int x = 5; x <= 7; ++x)
      for (int y = 5; y <= 7; ++y) fog.push_back({x, y});
    return GridLayout(8, 8, {0, 0}, {7, 0}, std::move(base), std::move(bridge), std::move(fog));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Cell start() const noexcept { return start_; }
  Cell terminal() const noexcept { return terminal_; }
  const std::vector<Cell>& base_water() const noexcept { return base_water_; }
  const std::vector<Cell>& flood_extra_water() const noexcept { return flood_extra_; }
  const std::vector<Cell>& fog_region() const noexcept { return fog_; }

  bool in_bounds(int x, int y) const noexcept { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  bool is_water(int x, int y, bool flood) const {
    const auto i = flat(x, y);
    return base_flags_[i] || (flood && extra_flags_[i]);
  }
  bool in_fog(int x, int y) const { return fog_flags_[flat(x, y)] != 0; }
  bool is_terminal(int x, int y) const noexcept { return x == terminal_.x && y == terminal_.y; }

 private:
  std::size_t cell_count() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
  std::size_t flat(int x, int y) const { return static_cast<std::size_t>(x) * static_cast<std::size_t>(height_) + static_cast<std::size_t>(y); }

  int width_;
  int height_;
  Cell start_;
  Cell terminal_;
  std::vector<Cell> base_water_;
  std::vector<Cell> flood_extra_;
  std::vector<Cell> fog_;
  std::vector<std::uint8_t> base_flags_;
  std::vector<std::uint8_t> extra_flags_;
  std::vector<std::uint8_t> fog_flags_;
};

/// Green: safe here and to the right. Red: danger here and to the right.
/// Orange: exactly one of the two. The right neighbor of the last column is dry.
inline Color color_of(const GridLayout& layout, bool flood, int x, int y) {
  if (!layout.in_bounds(x, y)) throw std::out_of_range("color_of: cell out of bounds");
  const bool here = layout.is_water(x, y, flood);
  const bool right = x + 1 < layout.width() && layout.is_water(x + 1, y, flood);
  if (here && right) return Color::Red;
  if (here || right) return Color::Orange;
  return Color::Green;
}

struct EnvParams {
  double wind_prob = 0.1;
  double flood_prob = 0.1;
  long episode_cap = 2000;
  bool stay_in_place = false;

  void validate() const {
    if (!(wind_prob >= 0.0 && wind_prob <= 1.0)) throw ConfigError("env.wind_prob: must lie in [0,1]");
    if (!(flood_prob >= 0.0 && flood_prob <= 1.0)) throw ConfigError("env.flood_prob: must lie in [0,1]");
    if (episode_cap < 1) throw ConfigError("env.episode_cap: must be >= 1");
  }
};

struct EnvState {
  Cell agent{};
  bool flood = false;
  long step_count = 0;     // steps in the current episode
  long episode_count = 0;  // resets performed
};

struct StepOutcome {
  double reward = 0.0;
  FullState next_state{};
  bool terminal = false;
  bool in_water = false;
  bool wind_triggered = false;
  bool truncated = false;  // episode cap reached without terminal
};

inline constexpr double kStepReward = -1.0;
inline constexpr double kWaterPenalty = -10.0;
inline constexpr double kTerminalReward = 100.0;

/// One environment transition. Draw order per step is fixed: wind trigger,
/// wind direction (only when triggered), flood flip.
inline StepOutcome step(EnvState& env, const GridLayout& layout, Action action, double wind_prob,
                        double flood_prob, Rng& rng) {
  StepOutcome out;
  Action delta = action;
  out.wind_triggered = rng.bernoulli(wind_prob);
  if (out.wind_triggered) {
    Action candidates[8];
    std::size_t n = 0;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (std::max(std::abs(dx - action.dx), std::abs(dy - action.dy)) == 1) candidates[n++] = {dx, dy};
      }
    }
    delta = candidates[rng.index(n)];
  }
  env.agent.x = std::clamp(env.agent.x + delta.dx, 0, layout.width() - 1);
  env.agent.y = std::clamp(env.agent.y + delta.dy, 0, layout.height() - 1);
  ++env.step_count;

  out.in_water = layout.is_water(env.agent.x, env.agent.y, env.flood);
  out.terminal = layout.is_terminal(env.agent.x, env.agent.y);
  out.reward = kStepReward + (out.in_water ? kWaterPenalty : 0.0) + (out.terminal ? kTerminalReward : 0.0);

  if (rng.bernoulli(flood_prob)) env.flood = !env.flood;
  out.next_state = {env.agent.x, env.agent.y, color_of(layout, env.flood, env.agent.x, env.agent.y)};
  return out;
}

/// Moves the agent to the start cell. The flood flag persists across episodes.
inline FullState reset(EnvState& env, const GridLayout& layout) {
  env.agent = layout.start();
  env.step_count = 0;
  ++env.episode_count;
  return {env.agent.x, env.agent.y, color_of(layout, env.flood, env.agent.x, env.agent.y)};
}

/// Layout, parameters and mutable state bundled, with the episode cap applied.
class GridWorld {
 public:
  GridWorld(GridLayout layout, EnvParams params)
      : layout_(std::move(layout)), params_(params), actions_(action_set(params.stay_in_place)) {
    params_.validate();
    env_.agent = layout_.start();
  }

  FullState reset() { return miql::reset(env_, layout_); }

  StepOutcome step(std::size_t action_index, Rng& rng) {
    StepOutcome out = miql::step(env_, layout_, actions_.at(action_index), params_.wind_prob, params_.flood_prob, rng);
    out.truncated = !out.terminal && env_.step_count >= params_.episode_cap;
    return out;
  }

  const GridLayout& layout() const noexcept { return layout_; }
  const EnvParams& params() const noexcept { return params_; }
  const EnvState& state() const noexcept { return env_; }
  EnvState& state() noexcept { return env_; }
  const std::vector<Action>& actions() const noexcept { return actions_; }

 private:
  GridLayout layout_;
  EnvParams params_;
  std::vector<Action> actions_;
  EnvState env_{};
};

}  // namespace miql
