#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "miql/gridworld.hpp"

using namespace miql;

namespace {
const GridLayout kStd = GridLayout::standard();

std::size_t action_index(const std::vector<Action>& acts, Action a) {
  for (std::size_t i = 0; i < acts.size(); ++i)
    if (acts[i] == a) return i;
  throw std::logic_error("no such action");
}
}  // namespace

TEST(GridLayout, StandardGeometry) {
  EXPECT_EQ(kStd.width(), 8);
  EXPECT_EQ(kStd.height(), 8);
  EXPECT_EQ(kStd.start(), (Cell{0, 0}));
  EXPECT_EQ(kStd.terminal(), (Cell{7, 0}));
  EXPECT_EQ(kStd.base_water().size(), 16u);
  EXPECT_EQ(kStd.flood_extra_water().size(), 4u);
  EXPECT_EQ(kStd.fog_region().size(), 9u);
  EXPECT_TRUE(kStd.is_water(3, 0, false));
  EXPECT_FALSE(kStd.is_water(3, 2, false));
  EXPECT_TRUE(kStd.is_water(3, 2, true));
  EXPECT_TRUE(kStd.in_fog(6, 6));
  EXPECT_FALSE(kStd.in_fog(4, 6));
}

TEST(GridLayout, RejectsInvalidLayouts) {
  EXPECT_THROW(GridLayout(8, 8, {0, 0}, {8, 0}, {}, {}, {}), ConfigError);
  EXPECT_THROW(GridLayout(8, 8, {0, 0}, {7, 0}, {{0, 0}}, {}, {}), ConfigError);
  EXPECT_THROW(GridLayout(8, 8, {0, 0}, {7, 0}, {}, {{7, 0}}, {}), ConfigError);
  EXPECT_THROW(GridLayout(8, 8, {0, 0}, {7, 0}, {}, {}, {{7, 0}}), ConfigError);
  EXPECT_THROW(GridLayout(8, 8, {0, 0}, {7, 0}, {{9, 9}}, {}, {}), ConfigError);
}

TEST(GridWorld, ActionSetSize) {
  EXPECT_EQ(action_set(false).size(), 8u);
  EXPECT_EQ(action_set(true).size(), 9u);
  const auto without = action_set(false);
  EXPECT_EQ(std::count(without.begin(), without.end(), Action{0, 0}), 0);
}

TEST(ColorOf, Examples) {
  EXPECT_EQ(color_of(kStd, false, 0, 5), Color::Green);   // dry, dry right
  EXPECT_EQ(color_of(kStd, false, 7, 7), Color::Green);   // last column
  EXPECT_EQ(color_of(kStd, false, 1, 0), Color::Orange);  // water to the right
  EXPECT_EQ(color_of(kStd, false, 3, 0), Color::Red);     // water here and right
  EXPECT_EQ(color_of(kStd, false, 5, 0), Color::Orange);  // water here, dry right
  EXPECT_EQ(color_of(kStd, false, 1, 2), Color::Green);   // bridge dry
  EXPECT_EQ(color_of(kStd, true, 1, 2), Color::Orange);   // bridge flooded
  EXPECT_THROW(color_of(kStd, false, 8, 0), std::out_of_range);
}

TEST(ColorOf, TotalAndDeterministic) {
  for (bool f : {false, true})
    for (int x = 0; x < 8; ++x)
      for (int y = 0; y < 8; ++y) EXPECT_EQ(color_of(kStd, f, x, y), color_of(kStd, f, x, y));
}

TEST(Step, PlainMoveCostsOne) {
  EnvState env{{0, 0}, false, 0, 1};
  Rng rng(1);
  const auto out = step(env, kStd, {1, 0}, 0.0, 0.0, rng);
  EXPECT_EQ(out.reward, -1.0);
  EXPECT_EQ(env.agent, (Cell{1, 0}));
  EXPECT_FALSE(out.terminal);
  EXPECT_EQ(out.next_state, (FullState{1, 0, Color::Orange}));
}

TEST(Step, TerminalArrivalIs99) {
  EnvState env{{6, 0}, false, 0, 1};
  Rng rng(1);
  const auto out = step(env, kStd, {1, 0}, 0.0, 0.0, rng);
  EXPECT_TRUE(out.terminal);
  EXPECT_DOUBLE_EQ(out.reward, 99.0);
}

TEST(Step, ClampsAtBoundary) {
  EnvState env{{0, 0}, false, 0, 1};
  Rng rng(1);
  const auto out = step(env, kStd, {-1, -1}, 0.0, 0.0, rng);
  EXPECT_EQ(env.agent, (Cell{0, 0}));
  EXPECT_EQ(out.reward, -1.0);
}

TEST(Step, WaterPenaltyStacks) {
  EnvState env{{1, 0}, false, 0, 1};
  Rng rng(1);
  const auto out = step(env, kStd, {1, 0}, 0.0, 0.0, rng);
  EXPECT_TRUE(out.in_water);
  EXPECT_DOUBLE_EQ(out.reward, -11.0);
}

TEST(Step, WindMovesToChebyshevNeighbour) {
  EnvState env{{4, 5}, false, 0, 1};
  Rng rng(9);
  for (int i = 0; i < 2000; ++i) {
    env.agent = {4, 5};
    const auto out = step(env, kStd, {0, 1}, 1.0, 0.0, rng);
    ASSERT_TRUE(out.wind_triggered);
    const int dx = env.agent.x - 4, dy = env.agent.y - 5;
    ASSERT_EQ(std::max(std::abs(dx - 0), std::abs(dy - 1)), 1);
  }
}

TEST(Step, SipCanBeBlownAway) {
  EnvState env{{4, 5}, false, 0, 1};
  Rng rng(3);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 500; ++i) {
    env.agent = {4, 5};
    step(env, kStd, {0, 0}, 1.0, 0.0, rng);
    seen.insert({env.agent.x, env.agent.y});
  }
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(seen.count({4, 5}), 0u);
}

TEST(Step, WindFrequencyWithin3SE) {
  GridWorld w(kStd, {});
  Rng rng(11);
  w.reset();
  const int n = 100000;
  int wind = 0;
  for (int i = 0; i < n; ++i) {
    const auto out = w.step(static_cast<std::size_t>(i % 8), rng);
    wind += out.wind_triggered;
    if (out.terminal || out.truncated) w.reset();
  }
  EXPECT_NEAR(wind / double(n), 0.1, 3 * std::sqrt(0.09 / n));
}

TEST(Step, FloodFlipRateWithin3SE) {
  GridWorld w(kStd, {});
  Rng rng(12);
  w.reset();
  const int n = 100000;
  int flips = 0;
  bool prev = w.state().flood;
  for (int i = 0; i < n; ++i) {
    const auto out = w.step(2, rng);
    flips += w.state().flood != prev;
    prev = w.state().flood;
    if (out.terminal || out.truncated) w.reset();
  }
  EXPECT_NEAR(flips / double(n), 0.1, 3 * std::sqrt(0.09 / n));
}

TEST(Step, RewardDecompositionAndBounds) {
  GridWorld w(kStd, {});
  Rng rng(13), pick(14);
  w.reset();
  for (int i = 0; i < 100000; ++i) {
    const auto out = w.step(pick.index(8), rng);
    ASSERT_TRUE(out.reward == -1.0 || out.reward == -11.0 || out.reward == 99.0) << out.reward;
    ASSERT_TRUE(kStd.in_bounds(w.state().agent.x, w.state().agent.y));
    ASSERT_EQ(out.next_state.color, color_of(kStd, w.state().flood, out.next_state.x, out.next_state.y));
    if (out.terminal) {
      ASSERT_FALSE(out.in_water);
    }
    if (out.terminal || out.truncated) w.reset();
  }
}

TEST(Reset, StartAndFloodPersistence) {
  GridWorld w(kStd, {});
  w.state().agent = {5, 5};
  w.state().flood = true;
  const auto s = w.reset();
  EXPECT_EQ(s.x, 0);
  EXPECT_EQ(s.y, 0);
  EXPECT_TRUE(w.state().flood);
  EXPECT_EQ(w.state().episode_count, 1);
  const auto s2 = w.reset();
  EXPECT_EQ(s, s2);
  EXPECT_EQ(w.state().episode_count, 2);
}

TEST(GridWorld, EpisodeCapTruncates) {
  EnvParams p;
  p.episode_cap = 5;
  p.wind_prob = 0.0;
  GridWorld w(kStd, p);
  Rng rng(1);
  w.reset();
  const auto left = action_index(w.actions(), {-1, 0});
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(w.step(left, rng).truncated);
  EXPECT_TRUE(w.step(left, rng).truncated);
}
