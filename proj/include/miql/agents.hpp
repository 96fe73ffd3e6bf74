#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "miql/gridworld.hpp"
#include "miql/missingness.hpp"
#include "miql/rng.hpp"
#include "miql/tabular.hpp"

namespace miql {

enum class Method {
  MultipleImputation,
  SingleImputation,
  RandomAction,
  LastObservedV1,
  LastObservedV2,
  MissingAsState,
  StandardQ,  // fully observed reference agent
};

enum class TUpdate { Synthetic, Conservative };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::MultipleImputation: return "mi";
    case Method::SingleImputation: return "si";
    case Method::RandomAction: return "random_action";
    case Method::LastObservedV1: return "last_observed_v1";
    case Method::LastObservedV2: return "last_observed_v2";
    case Method::MissingAsState: return "missing_as_state";
    case Method::StandardQ: return "standard_q";
  }
  return "?";
}

inline const char* to_string(TUpdate t) { return t == TUpdate::Synthetic ? "synthetic" : "conservative"; }

struct AgentConfig {
  Method method = Method::MultipleImputation;
  TUpdate t_update = TUpdate::Synthetic;
  TDParams params{};
  double epsilon = 0.05;
  double p_shuffle = 0.0;

  bool imputes() const noexcept {
    return method == Method::MultipleImputation || method == Method::SingleImputation;
  }

  int pathway_count() const noexcept { return imputes() ? params.K : 1; }

  void validate() const {
    params.validate();
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("agent.epsilon: must lie in [0,1]");
    if (!(p_shuffle >= 0.0 && p_shuffle <= 1.0)) throw ConfigError("agent.p_shuffle: must lie in [0,1]");
    if (method == Method::SingleImputation && params.K != 1) throw ConfigError("agent.K: single imputation requires K = 1");
  }

  /// Method label without hyperparameters, e.g. "MI-K10-synthetic".
  std::string label() const {
    std::string l;
    switch (method) {
      case Method::MultipleImputation: l = "MI-K" + std::to_string(params.K) + "-" + to_string(t_update); break;
      case Method::SingleImputation: l = std::string("SI-") + to_string(t_update); break;
      case Method::RandomAction: l = "RandomAction"; break;
      case Method::LastObservedV1: l = "LastObservedV1"; break;
      case Method::LastObservedV2: l = "LastObservedV2"; break;
      case Method::MissingAsState: l = "MissingAsState"; break;
      case Method::StandardQ: l = "StandardQ"; break;
    }
    if (imputes() && p_shuffle > 0.0) l += "-mix" + format_double(p_shuffle);
    return l;
  }
};

/// The K imputed state chains S_t^k.
struct PathwayEnsemble {
  std::vector<FullState> states;

  std::size_t size() const noexcept { return states.size(); }
  bool synced() const {
    return std::all_of(states.begin(), states.end(), [&](const FullState& s) { return s == states.front(); });
  }
  friend bool operator==(const PathwayEnsemble&, const PathwayEnsemble&) = default;
};

/// Draws S_{t+1}^k for every pathway: observed components are copied, missing
/// ones come from T-hat conditioned on S_t^k and the previous action. A fully
/// observed observation syncs every pathway without consuming randomness.
inline PathwayEnsemble impute_pathways(const PathwayEnsemble& ensemble, const ObservedState& obs,
                                       const TransitionCounts& counts, int prev_action, const StateSpace& space,
                                       Rng& rng) {
  PathwayEnsemble next;
  next.states.reserve(ensemble.size());
  if (const auto full = obs.full()) {
    next.states.assign(ensemble.size(), *full);
    return next;
  }
  for (const auto& s : ensemble.states)
    next.states.push_back(sample_completion(counts, space.index(s), prev_action, obs, space, rng));
  return next;
}

/// With probability p_shuffle, a uniformly random permutation of the pathways.
inline void mix_pathways(PathwayEnsemble& ensemble, double p_shuffle, Rng& rng) {
  if (ensemble.size() < 2 || p_shuffle <= 0.0) return;
  if (!rng.bernoulli(p_shuffle)) return;
  for (std::size_t i = ensemble.size() - 1; i > 0; --i) std::swap(ensemble.states[i], ensemble.states[rng.index(i + 1)]);
}

/// Epsilon-greedy over one table state. Consumes one uniform, plus one index
/// draw when exploring.
inline int epsilon_greedy(const QTable& q, int s, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return static_cast<int>(rng.index(static_cast<std::size_t>(q.actions())));
  return q.greedy_action(s);
}

/// Each pathway votes for its greedy action and one vote is picked uniformly;
/// with probability epsilon a uniform action replaces it. A unanimous vote
/// consumes the same randomness as epsilon_greedy.
inline int vote_action(const QTable& q, const PathwayEnsemble& ensemble, const StateSpace& space, double epsilon,
                       Rng& rng) {
  if (rng.uniform() < epsilon) return static_cast<int>(rng.index(static_cast<std::size_t>(q.actions())));
  const int first = q.greedy_action(space.index(ensemble.states.front()));
  bool unanimous = true;
  std::array<int, 64> small{};
  std::vector<int> large;
  int* votes = small.data();
  if (ensemble.size() > small.size()) {
    large.resize(ensemble.size());
    votes = large.data();
  }
  votes[0] = first;
  for (std::size_t k = 1; k < ensemble.size(); ++k) {
    votes[k] = q.greedy_action(space.index(ensemble.states[k]));
    unanimous = unanimous && votes[k] == first;
  }
  if (unanimous) return first;
  return votes[rng.index(ensemble.size())];
}

/// Index in the (W+1)(H+1)(C+1) missing-as-state table.
inline int augment_state(const ObservedState& obs, const StateSpace& augmented) { return augmented.index(obs); }

/// Everything an agent carries between steps apart from its Q and T tables.
struct AgentMemory {
  std::optional<FullState> last_full_state;   // LastObservedV1
  std::array<std::optional<int>, 3> last_seen;  // LastObservedV2, color stored as its integer value
  int prev_action = -1;
  int prev_state = -1;                         // table index acted on at the previous step
  ObservedState prev_obs;
  PathwayEnsemble ensemble;                    // imputation pathways (MI/SI)
  long fallbacks = 0;                          // uniform completions forced by empty memory
};

namespace detail {

inline FullState uniform_completion(const ObservedState& obs, const StateSpace& space, Rng& rng) {
  return space.completion(obs, static_cast<int>(rng.index(static_cast<std::size_t>(space.completion_count(obs)))));
}

/// The state a non-imputing baseline acts on and learns from.
inline FullState substitute_state(const AgentConfig& config, AgentMemory& mem, const ObservedState& obs,
                                  const StateSpace& space, Rng& rng) {
  if (obs.x) mem.last_seen[0] = *obs.x;
  if (obs.y) mem.last_seen[1] = *obs.y;
  if (obs.color) mem.last_seen[2] = static_cast<int>(*obs.color);
  if (const auto full = obs.full()) {
    mem.last_full_state = *full;
    return *full;
  }
  if (config.method == Method::LastObservedV1) {
    if (mem.last_full_state) return *mem.last_full_state;
    ++mem.fallbacks;
    return uniform_completion(obs, space, rng);
  }
  ObservedState filled = obs;
  if (!filled.x && mem.last_seen[0]) filled.x = *mem.last_seen[0];
  if (!filled.y && mem.last_seen[1]) filled.y = *mem.last_seen[1];
  if (!filled.color && mem.last_seen[2]) filled.color = static_cast<Color>(*mem.last_seen[2]);
  if (filled.fully_observed()) return *filled.full();
  ++mem.fallbacks;
  return uniform_completion(filled, space, rng);
}

}  // namespace detail

/// Starts an episode from a fully observed start state and returns A_0.
inline int agent_begin_episode(const AgentConfig& config, AgentMemory& mem, const ObservedState& start,
                               const QTable& q, const StateSpace& space, Rng& rng) {
  const auto full = start.full();
  if (!full) throw std::invalid_argument("agent_begin_episode: start state must be fully observed");
  mem.prev_obs = start;
  mem.last_full_state = *full;
  mem.last_seen = {full->x, full->y, static_cast<int>(full->color)};
  int action = 0;
  if (config.imputes()) {
    mem.ensemble.states.assign(static_cast<std::size_t>(config.params.K), *full);
    mem.prev_state = space.index(*full);
    action = vote_action(q, mem.ensemble, space, config.epsilon, rng);
  } else {
    mem.prev_state = space.index(start);
    action = epsilon_greedy(q, mem.prev_state, config.epsilon, rng);
  }
  mem.prev_action = action;
  return action;
}

/// One learning step: consumes the observation of S_{t+1} and R_{t+1} for the
/// stored (S_t, A_t), and returns A_{t+1} (-1 at a terminal transition).
/// Order follows the imputation algorithm: impute, select from Q_t, update Q,
/// update T.
inline int agent_step(const AgentConfig& config, AgentMemory& mem, const ObservedState& obs, double reward,
                      bool terminal, QTable& q, TransitionCounts& counts, const StateSpace& space, Rng& rng) {
  const int a = mem.prev_action;
  if (a < 0) throw std::logic_error("agent_step: no episode in progress");
  int action = -1;

  switch (config.method) {
    case Method::MultipleImputation:
    case Method::SingleImputation: {
      const int K = config.params.K;
      PathwayEnsemble next = impute_pathways(mem.ensemble, obs, counts, a, space, rng);
      if (!terminal) action = vote_action(q, next, space, config.epsilon, rng);
      std::array<StatePair, 64> small{};
      std::vector<StatePair> large;
      std::span<StatePair> pairs(small.data(), static_cast<std::size_t>(K));
      if (K > static_cast<int>(small.size())) {
        large.resize(static_cast<std::size_t>(K));
        pairs = large;
      }
      for (int k = 0; k < K; ++k)
        pairs[static_cast<std::size_t>(k)] = {space.index(mem.ensemble.states[static_cast<std::size_t>(k)]),
                                              space.index(next.states[static_cast<std::size_t>(k)])};
      q_update_fractional(q, pairs, a, reward, terminal, config.params);
      if (config.t_update == TUpdate::Synthetic) {
        t_update_synthetic(counts, pairs, a, K);
      } else {
        t_update_conservative(counts, pairs[0].from, a, pairs[0].to, mem.prev_obs.fully_observed() && obs.fully_observed());
      }
      mem.ensemble = std::move(next);
      if (!terminal) mix_pathways(mem.ensemble, config.p_shuffle, rng);
      mem.prev_state = space.index(mem.ensemble.states.front());
      break;
    }
    case Method::RandomAction: {
      const bool full_now = obs.fully_observed();
      const int s_next = full_now ? space.index(obs) : -1;
      if (!terminal) {
        action = full_now ? epsilon_greedy(q, s_next, config.epsilon, rng)
                          : static_cast<int>(rng.index(static_cast<std::size_t>(q.actions())));
      }
      if (full_now && mem.prev_obs.fully_observed()) q_update_standard(q, mem.prev_state, a, reward, s_next, terminal, config.params);
      mem.prev_state = s_next;
      break;
    }
    case Method::LastObservedV1:
    case Method::LastObservedV2: {
      const int s_next = space.index(detail::substitute_state(config, mem, obs, space, rng));
      if (!terminal) action = epsilon_greedy(q, s_next, config.epsilon, rng);
      q_update_standard(q, mem.prev_state, a, reward, s_next, terminal, config.params);
      mem.prev_state = s_next;
      break;
    }
    case Method::MissingAsState: {
      const int s_next = augment_state(obs, space);
      if (!terminal) action = epsilon_greedy(q, s_next, config.epsilon, rng);
      q_update_standard(q, mem.prev_state, a, reward, s_next, terminal, config.params);
      mem.prev_state = s_next;
      break;
    }
    case Method::StandardQ: {
      if (!obs.fully_observed()) throw std::invalid_argument("agent_step: standard Q-learning needs full observations");
      const int s_next = space.index(obs);
      if (!terminal) action = epsilon_greedy(q, s_next, config.epsilon, rng);
      q_update_standard(q, mem.prev_state, a, reward, s_next, terminal, config.params);
      mem.prev_state = s_next;
      break;
    }
  }
  mem.prev_obs = obs;
  mem.prev_action = action;
  return action;
}

/// An agent with its own tables and random stream.
class Agent {
 public:
  Agent(AgentConfig config, int width, int height, int action_count, Rng rng)
      : config_(config),
        space_(config.method == Method::MissingAsState ? StateSpace::augmented(width, height)
                                                        : StateSpace::full(width, height)),
        q_(space_.size(), action_count),
        counts_(config.imputes() ? space_.size() : 1, config.imputes() ? action_count : 1),
        rng_(std::move(rng)) {
    if (config_.method == Method::SingleImputation) config_.params.K = 1;
    config_.validate();
  }

  int begin_episode(const ObservedState& start) { return agent_begin_episode(config_, memory_, start, q_, space_, rng_); }

  int observe(const ObservedState& obs, double reward, bool terminal) {
    return agent_step(config_, memory_, obs, reward, terminal, q_, counts_, space_, rng_);
  }

  const AgentConfig& config() const noexcept { return config_; }
  const StateSpace& space() const noexcept { return space_; }
  const QTable& q() const noexcept { return q_; }
  const TransitionCounts& counts() const noexcept { return counts_; }
  const AgentMemory& memory() const noexcept { return memory_; }

  /// FNV-1a over the pathway states, for trace logs.
  std::uint64_t pathways_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](int v) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
      h *= 0x100000001b3ULL;
    };
    for (const auto& s : memory_.ensemble.states) {
      mix(s.x);
      mix(s.y);
      mix(static_cast<int>(s.color));
    }
    return h;
  }

 private:
  AgentConfig config_;
  StateSpace space_;
  QTable q_;
  TransitionCounts counts_;
  Rng rng_;
  AgentMemory memory_;
};

}  // namespace miql
