#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "miql/agents.hpp"

using namespace miql;

namespace {
const StateSpace kFull = StateSpace::full(8, 8);

double se(double p, int n) { return std::sqrt(p * (1 - p) / n); }

AgentConfig make(Method m, int K = 1, double eps = 0.0) {
  AgentConfig c;
  c.method = m;
  c.params.K = K;
  c.params.alpha = 0.5;
  c.params.gamma = 0.9;
  c.epsilon = eps;
  return c;
}

ObservedState obs_of(std::optional<int> x, std::optional<int> y, std::optional<Color> c) {
  ObservedState o;
  o.x = x;
  o.y = y;
  o.color = c;
  return o;
}
}  // namespace

TEST(ImputePathways, FullObservationSyncsWithoutRandomness) {
  TransitionCounts t(kFull.size(), 8);
  PathwayEnsemble e{{{0, 0, Color::Green}, {1, 1, Color::Red}, {2, 2, Color::Orange}}};
  Rng a(1), b(1);
  const auto next = impute_pathways(e, observe_full({3, 4, Color::Green}), t, 0, kFull, a);
  EXPECT_TRUE(next.synced());
  EXPECT_EQ(next.states[0], (FullState{3, 4, Color::Green}));
  EXPECT_EQ(a.next(), b.next());
}

TEST(ImputePathways, EmptyCountsUniformOverAllStates) {
  TransitionCounts t(kFull.size(), 8);
  PathwayEnsemble e;
  e.states.assign(4, FullState{0, 0, Color::Green});
  Rng rng(2);
  const int rounds = 48000;
  std::vector<int> hits(kFull.size(), 0);
  for (int i = 0; i < rounds; ++i) {
    const auto next = impute_pathways(e, ObservedState{}, t, 0, kFull, rng);
    for (const auto& s : next.states) ++hits[kFull.index(s)];
  }
  const int n = rounds * 4;
  const double p = 1.0 / 192;
  int outside = 0;
  for (int h : hits) outside += std::abs(h / double(n) - p) > 4 * se(p, n);
  EXPECT_LE(outside, 1);
}

TEST(ImputePathways, PointMassForcesAgreement) {
  TransitionCounts t(kFull.size(), 8);
  const FullState from{0, 0, Color::Green}, to{4, 6, Color::Orange};
  t.add(kFull.index(from), 3, kFull.index(to), 2.0);
  PathwayEnsemble e;
  e.states.assign(10, from);
  Rng rng(3);
  const auto next = impute_pathways(e, obs_of(4, std::nullopt, std::nullopt), t, 3, kFull, rng);
  EXPECT_TRUE(next.synced());
  EXPECT_EQ(next.states[0], to);
}

TEST(ImputePathways, ObservedComponentsPreserved) {
  TransitionCounts t(kFull.size(), 8);
  Rng rng(4);
  PathwayEnsemble e;
  e.states.assign(5, FullState{1, 1, Color::Green});
  for (int i = 0; i < 2000; ++i) {
    const auto o = obs_of(std::nullopt, 3, Color::Red);
    for (const auto& s : impute_pathways(e, o, t, 0, kFull, rng).states) {
      ASSERT_EQ(s.y, 3);
      ASSERT_EQ(s.color, Color::Red);
    }
  }
}

TEST(VoteAction, UnanimousGreedy) {
  QTable q(kFull.size(), 8);
  const FullState s{2, 2, Color::Green};
  q(kFull.index(s), 5) = 1.0;
  PathwayEnsemble e;
  e.states.assign(6, s);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(vote_action(q, e, kFull, 0.0, rng), 5);
}

TEST(VoteAction, TwoVotesHalfEach) {
  QTable q(kFull.size(), 8);
  const FullState s1{2, 2, Color::Green}, s2{5, 5, Color::Green};
  q(kFull.index(s1), 3) = 1.0;
  q(kFull.index(s2), 4) = 1.0;
  PathwayEnsemble e{{s1, s2}};
  Rng rng(6);
  const int n = 10000;
  int left = 0;
  for (int i = 0; i < n; ++i) {
    const int a = vote_action(q, e, kFull, 0.0, rng);
    ASSERT_TRUE(a == 3 || a == 4);
    left += a == 3;
  }
  EXPECT_NEAR(left / double(n), 0.5, 3 * se(0.5, n));
}

TEST(VoteAction, FullExplorationIsUniform) {
  QTable q(kFull.size(), 8);
  const FullState s{2, 2, Color::Green};
  q(kFull.index(s), 5) = 1.0;
  PathwayEnsemble e;
  e.states.assign(3, s);
  Rng rng(7);
  const int n = 80000;
  std::vector<int> hits(8, 0);
  for (int i = 0; i < n; ++i) ++hits[vote_action(q, e, kFull, 1.0, rng)];
  for (int h : hits) EXPECT_NEAR(h / double(n), 0.125, 4 * se(0.125, n));
}

TEST(VoteAction, UnanimousConsumesSameAsEpsilonGreedy) {
  QTable q(kFull.size(), 8);
  const FullState s{1, 2, Color::Red};
  PathwayEnsemble e;
  e.states.assign(4, s);
  Rng a(8), b(8);
  for (int i = 0; i < 1000; ++i)
    ASSERT_EQ(vote_action(q, e, kFull, 0.3, a), epsilon_greedy(q, kFull.index(s), 0.3, b));
  EXPECT_EQ(a.next(), b.next());
}

TEST(MixPathways, IdentityCases) {
  PathwayEnsemble e{{{0, 0, Color::Green}, {1, 0, Color::Green}, {2, 0, Color::Green}}};
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    auto copy = e;
    mix_pathways(copy, 0.0, rng);
    ASSERT_EQ(copy, e);
  }
  PathwayEnsemble one{{{3, 3, Color::Red}}};
  auto copy = one;
  mix_pathways(copy, 1.0, rng);
  EXPECT_EQ(copy, one);
}

TEST(MixPathways, UniformOverPermutations) {
  const PathwayEnsemble e{{{0, 0, Color::Green}, {1, 0, Color::Green}, {2, 0, Color::Green}}};
  Rng rng(10);
  std::map<std::vector<int>, int> seen;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    auto copy = e;
    mix_pathways(copy, 1.0, rng);
    std::vector<int> order;
    for (const auto& s : copy.states) order.push_back(s.x);
    ++seen[order];
  }
  ASSERT_EQ(seen.size(), 6u);
  for (const auto& [order, count] : seen) EXPECT_NEAR(count / double(n), 1.0 / 6, 4 * se(1.0 / 6, n));
}

TEST(AugmentState, InjectiveWith324Cells) {
  const auto aug = StateSpace::augmented(8, 8);
  EXPECT_EQ(aug.size(), 324);
  std::set<int> seen;
  for (int x = -1; x < 8; ++x)
    for (int y = -1; y < 8; ++y)
      for (int c = -1; c < 3; ++c) {
        const auto o = obs_of(x < 0 ? std::nullopt : std::optional<int>(x), y < 0 ? std::nullopt : std::optional<int>(y),
                              c < 0 ? std::nullopt : std::optional<Color>(static_cast<Color>(c)));
        const int idx = augment_state(o, aug);
        ASSERT_GE(idx, 0);
        ASSERT_LT(idx, 324);
        seen.insert(idx);
      }
  EXPECT_EQ(seen.size(), 324u);
  EXPECT_EQ(augment_state(ObservedState{}, aug), 323);
}

TEST(LastObserved, V2FillsFromPerDimensionMemory) {
  auto cfg = make(Method::LastObservedV2);
  AgentMemory mem;
  QTable q(kFull.size(), 8);
  TransitionCounts t(1, 1);
  Rng rng(11);
  agent_begin_episode(cfg, mem, observe_full({0, 0, Color::Green}), q, kFull, rng);
  agent_step(cfg, mem, observe_full({2, 6, Color::Green}), -1, false, q, t, kFull, rng);
  agent_step(cfg, mem, obs_of(3, std::nullopt, Color::Green), -1, false, q, t, kFull, rng);
  EXPECT_EQ(mem.prev_state, kFull.index(FullState{3, 6, Color::Green}));
  EXPECT_EQ(mem.fallbacks, 0);
}

TEST(LastObserved, V1ReusesLastFullState) {
  auto cfg = make(Method::LastObservedV1);
  AgentMemory mem;
  QTable q(kFull.size(), 8);
  TransitionCounts t(1, 1);
  Rng rng(12);
  agent_begin_episode(cfg, mem, observe_full({0, 0, Color::Green}), q, kFull, rng);
  agent_step(cfg, mem, observe_full({2, 6, Color::Green}), -1, false, q, t, kFull, rng);
  agent_step(cfg, mem, obs_of(3, std::nullopt, Color::Red), -1, false, q, t, kFull, rng);
  EXPECT_EQ(mem.prev_state, kFull.index(FullState{2, 6, Color::Green}));
}

TEST(LastObserved, FallbackWhenMemoryEmpty) {
  auto cfg = make(Method::LastObservedV1);
  AgentMemory mem;
  Rng rng(13);
  const auto s = detail::substitute_state(cfg, mem, obs_of(4, std::nullopt, std::nullopt), kFull, rng);
  EXPECT_EQ(s.x, 4);
  EXPECT_EQ(mem.fallbacks, 1);
}

TEST(RandomAction, MissingObsGivesUniformActionAndLeavesQ) {
  auto cfg = make(Method::RandomAction);
  AgentMemory mem;
  QTable q(kFull.size(), 8);
  TransitionCounts t(1, 1);
  Rng rng(14);
  const int n = 40000;
  std::vector<int> hits(8, 0);
  for (int i = 0; i < n; ++i) {
    agent_begin_episode(cfg, mem, observe_full({0, 0, Color::Green}), q, kFull, rng);
    ++hits[agent_step(cfg, mem, ObservedState{}, -1, false, q, t, kFull, rng)];
  }
  for (double v : q.values()) ASSERT_EQ(v, 0.0);
  for (int h : hits) EXPECT_NEAR(h / double(n), 0.125, 4 * se(0.125, n));
}

TEST(StandardQ, RejectsPartialObservation) {
  auto cfg = make(Method::StandardQ);
  AgentMemory mem;
  QTable q(kFull.size(), 8);
  TransitionCounts t(1, 1);
  Rng rng(15);
  agent_begin_episode(cfg, mem, observe_full({0, 0, Color::Green}), q, kFull, rng);
  EXPECT_THROW(agent_step(cfg, mem, obs_of(1, std::nullopt, Color::Green), -1, false, q, t, kFull, rng),
               std::invalid_argument);
}

TEST(Agent, BeginEpisodeNeedsFullStart) {
  Agent a(make(Method::MultipleImputation, 3), 8, 8, 8, Rng(1));
  EXPECT_THROW(a.begin_episode(obs_of(0, std::nullopt, Color::Green)), std::invalid_argument);
}

TEST(Agent, MissingAsStateStaysInItsTable) {
  Agent a(make(Method::MissingAsState, 1, 0.2), 8, 8, 8, Rng(16));
  Rng env(17);
  a.begin_episode(observe_full({0, 0, Color::Green}));
  for (int i = 0; i < 20000; ++i) {
    ObservedState o = observe_full({static_cast<int>(env.index(8)), static_cast<int>(env.index(8)), Color::Green});
    if (env.bernoulli(0.5)) o.x.reset();
    if (env.bernoulli(0.5)) o.color.reset();
    const bool term = env.bernoulli(0.02);
    const int act = a.observe(o, -1, term);
    if (term) {
      ASSERT_EQ(act, -1);
      a.begin_episode(observe_full({0, 0, Color::Green}));
    } else {
      ASSERT_GE(a.memory().prev_state, 0);
      ASSERT_LT(a.memory().prev_state, 324);
    }
  }
  EXPECT_EQ(a.q().states(), 324);
}

// K > 1 rescales the update into K sequential steps, so exact Q equality only holds at K = 1.
TEST(Agent, ZeroMissingnessMatchesStandardQ) {
  for (Method m : {Method::MultipleImputation, Method::SingleImputation, Method::RandomAction, Method::LastObservedV1,
                   Method::LastObservedV2}) {
    Agent x(make(m, 1, 0.1), 8, 8, 8, Rng(18));
    Agent ref(make(Method::StandardQ, 1, 0.1), 8, 8, 8, Rng(18));
    Rng env(19);
    ASSERT_EQ(x.begin_episode(observe_full({0, 0, Color::Green})), ref.begin_episode(observe_full({0, 0, Color::Green})));
    for (int i = 0; i < 5000; ++i) {
      const auto o = observe_full({static_cast<int>(env.index(8)), static_cast<int>(env.index(8)),
                                   static_cast<Color>(env.index(3))});
      const double r = env.bernoulli(0.2) ? -11.0 : -1.0;
      const bool term = env.bernoulli(0.01);
      ASSERT_EQ(x.observe(o, r, term), ref.observe(o, r, term)) << to_string(m) << " step " << i;
      if (term) {
        ASSERT_EQ(x.begin_episode(observe_full({0, 0, Color::Green})), ref.begin_episode(observe_full({0, 0, Color::Green})));
      }
    }
    EXPECT_EQ(x.q(), ref.q()) << to_string(m);
  }
}

TEST(AgentConfig, LabelsAndValidation) {
  auto mi = make(Method::MultipleImputation, 10);
  EXPECT_EQ(mi.label(), "MI-K10-synthetic");
  mi.p_shuffle = 0.1;
  EXPECT_EQ(mi.label(), "MI-K10-synthetic-mix0.1");
  auto si = make(Method::SingleImputation);
  si.t_update = TUpdate::Conservative;
  EXPECT_EQ(si.label(), "SI-conservative");
  si.params.K = 2;
  EXPECT_THROW(si.validate(), ConfigError);
  auto bad = make(Method::RandomAction);
  bad.epsilon = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}
