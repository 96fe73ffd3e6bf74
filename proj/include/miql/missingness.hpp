#pragma once

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "miql/gridworld.hpp"
#include "miql/rng.hpp"

namespace miql {

/// Missingness indicator per state dimension (x, y, color); true means missing.
struct Mask {
  std::array<bool, 3> bits{};

  bool any() const noexcept { return bits[0] || bits[1] || bits[2]; }
  bool none() const noexcept { return !any(); }
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Agent-visible state. An empty component is missing.
struct ObservedState {
  std::optional<int> x;
  std::optional<int> y;
  std::optional<Color> color;

  bool fully_observed() const noexcept { return x && y && color; }
  int missing_count() const noexcept { return !x + !y + !color; }
  std::optional<FullState> full() const {
    if (!fully_observed()) return std::nullopt;
    return FullState{*x, *y, *color};
  }
  Mask mask() const noexcept { return Mask{{!x, !y, !color}}; }
  friend bool operator==(const ObservedState&, const ObservedState&) = default;
};

inline ObservedState observe_full(const FullState& s) { return {s.x, s.y, s.color}; }

inline ObservedState apply_mask(const FullState& s, const Mask& m) {
  ObservedState o;
  if (!m.bits[0]) o.x = s.x;
  if (!m.bits[1]) o.y = s.y;
  if (!m.bits[2]) o.color = s.color;
  return o;
}

inline std::string to_string(const ObservedState& o) {
  std::ostringstream os;
  os << '(';
  if (o.x) os << *o.x; else os << '?';
  os << ' ';
  if (o.y) os << *o.y; else os << '?';
  os << ' ';
  if (o.color) os << to_string(*o.color); else os << '?';
  os << ')';
  return os.str();
}

/// Each dimension independently missing with its own rate.
struct Mcar {
  std::array<double, 3> theta{};
};

/// x and y missing at the rate of the true color. With color_observable the
/// mechanism is MAR; otherwise color is masked at the same rate (NMAR).
struct Mcolor {
  double theta_green = 0.0;
  double theta_orange = 0.0;
  double theta_red = 0.0;
  bool color_observable = true;

  double rate(Color c) const noexcept {
    switch (c) {
      case Color::Green: return theta_green;
      case Color::Orange: return theta_orange;
      case Color::Red: return theta_red;
    }
    return 0.0;
  }
};

/// All three dimensions missing at theta_in inside the fog region, theta_out elsewhere.
struct Mfog {
  double theta_in = 0.0;
  double theta_out = 0.0;
};

using MissingnessSpec = std::variant<Mcar, Mcolor, Mfog>;

inline void validate(const MissingnessSpec& spec) {
  auto prob = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("missingness.") + field + ": must lie in [0,1]");
  };
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Mcar>) {
          for (double t : m.theta) prob(t, "theta");
        } else if constexpr (std::is_same_v<T, Mcolor>) {
          prob(m.theta_green, "theta_green");
          prob(m.theta_orange, "theta_orange");
          prob(m.theta_red, "theta_red");
        } else {
          prob(m.theta_in, "theta_in");
          prob(m.theta_out, "theta_out");
        }
      },
      spec);
}

inline std::string describe(const MissingnessSpec& spec) {
  std::ostringstream os;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Mcar>) {
          os << "MCAR(" << m.theta[0];
          if (m.theta[1] != m.theta[0] || m.theta[2] != m.theta[0]) os << '/' << m.theta[1] << '/' << m.theta[2];
          os << ')';
        } else if constexpr (std::is_same_v<T, Mcolor>) {
          os << (m.color_observable ? "MCOLOR-MAR(" : "MCOLOR-NMAR(") << m.theta_green << '/' << m.theta_orange
             << '/' << m.theta_red << ')';
        } else {
          os << "MFOG(" << m.theta_in << '/' << m.theta_out << ')';
        }
      },
      spec);
  return os.str();
}

/// Draws the mask for the true state. Always consumes exactly three uniforms,
/// so mask streams stay aligned across trajectories.
inline Mask sample_mask(const MissingnessSpec& spec, const FullState& state, const GridLayout& layout, Rng& rng) {
  std::array<double, 3> rate{};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Mcar>) {
          rate = m.theta;
        } else if constexpr (std::is_same_v<T, Mcolor>) {
          const double r = m.rate(state.color);
          rate = {r, r, m.color_observable ? 0.0 : r};
        } else {
          const double r = layout.in_fog(state.x, state.y) ? m.theta_in : m.theta_out;
          rate = {r, r, r};
        }
      },
      spec);
  Mask mask;
  for (std::size_t j = 0; j < 3; ++j) mask.bits[j] = rng.bernoulli(rate[j]);
  return mask;
}

}  // namespace miql
