#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "miql/format.hpp"
#include "miql/gridworld.hpp"
#include "miql/missingness.hpp"
#include "miql/rng.hpp"

namespace miql {

/// Enumerates either the full (x, y, color) space or the space where each
/// dimension gains a '?' value. Index layout: ((x * H') + y) * C' + color.
class StateSpace {
 public:
  static StateSpace full(int width, int height) { return StateSpace(width, height, false); }
  static StateSpace augmented(int width, int height) { return StateSpace(width, height, true); }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool is_augmented() const noexcept { return augmented_; }
  int size() const noexcept { return xs() * ys() * cs(); }

  int index(const FullState& s) const noexcept {
    return (s.x * ys() + s.y) * cs() + static_cast<int>(s.color);
  }

  /// Missing components map to the '?' slot; only valid in the augmented space.
  int index(const ObservedState& o) const {
    if (!augmented_ && !o.fully_observed()) throw std::invalid_argument("StateSpace::index: missing component in full space");
    const int x = o.x ? *o.x : width_;
    const int y = o.y ? *o.y : height_;
    const int c = o.color ? static_cast<int>(*o.color) : kColorCount;
    return (x * ys() + y) * cs() + c;
  }

  /// Inverse of index() on the full space.
  FullState state(int index) const {
    const int c = index % cs();
    const int rest = index / cs();
    return {rest / ys(), rest % ys(), static_cast<Color>(c)};
  }

  bool consistent(int index, const ObservedState& o) const {
    const FullState s = state(index);
    return (!o.x || *o.x == s.x) && (!o.y || *o.y == s.y) && (!o.color || *o.color == s.color);
  }

  /// Number of full states agreeing with every observed component of o.
  int completion_count(const ObservedState& o) const noexcept {
    return (o.x ? 1 : width_) * (o.y ? 1 : height_) * (o.color ? 1 : kColorCount);
  }

  /// The n-th completion of o in index order, n < completion_count(o).
  FullState completion(const ObservedState& o, int n) const {
    FullState s;
    const int nc = o.color ? 1 : kColorCount;
    const int ny = o.y ? 1 : height_;
    s.color = o.color ? *o.color : static_cast<Color>(n % nc);
    n /= nc;
    s.y = o.y ? *o.y : n % ny;
    n /= ny;
    s.x = o.x ? *o.x : n;
    return s;
  }

 private:
  StateSpace(int w, int h, bool aug) : width_(w), height_(h), augmented_(aug) {}
  int xs() const noexcept { return width_ + (augmented_ ? 1 : 0); }
  int ys() const noexcept { return height_ + (augmented_ ? 1 : 0); }
  int cs() const noexcept { return kColorCount + (augmented_ ? 1 : 0); }

  int width_;
  int height_;
  bool augmented_;
};

class QTable {
 public:
  QTable(int states, int actions)
      : states_(states), actions_(actions), values_(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions), 0.0) {
    if (states < 1 || actions < 1) throw std::invalid_argument("QTable: empty table");
  }

  int states() const noexcept { return states_; }
  int actions() const noexcept { return actions_; }

  double operator()(int s, int a) const { return values_[offset(s, a)]; }
  double& operator()(int s, int a) { return values_[offset(s, a)]; }

  std::span<const double> row(int s) const { return {values_.data() + offset(s, 0), static_cast<std::size_t>(actions_)}; }
  std::span<double> row(int s) { return {values_.data() + offset(s, 0), static_cast<std::size_t>(actions_)}; }

  double max_value(int s) const {
    const auto r = row(s);
    return *std::max_element(r.begin(), r.end());
  }

  /// First maximizer in canonical action order.
  int greedy_action(int s) const {
    const auto r = row(s);
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }

  const std::vector<double>& values() const noexcept { return values_; }
  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t offset(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
  }

  int states_;
  int actions_;
  std::vector<double> values_;
};

struct TDParams {
  double alpha = 0.1;
  double gamma = 1.0;
  int K = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("agent.alpha: must lie in (0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("agent.gamma: must lie in [0,1]");
    if (K < 1) throw ConfigError("agent.K: must be >= 1");
  }
};

/// (S_t^k, S_{t+1}^k) as table indices.
struct StatePair {
  int from = 0;
  int to = 0;
  friend bool operator==(const StatePair&, const StatePair&) = default;
};

inline double td_error(const QTable& q, int s, int a, double r, int s_next, bool terminal, double gamma) {
  const double bootstrap = terminal ? 0.0 : q.max_value(s_next);
  return r + gamma * bootstrap - q(s, a);
}

inline void q_update_standard(QTable& q, int s, int a, double r, int s_next, bool terminal, const TDParams& p) {
  q(s, a) += p.alpha * td_error(q, s, a, r, s_next, terminal, p.gamma);
}

/// K sequential updates at rate alpha/K; update k reads the table left by update k-1.
inline void q_update_fractional(QTable& q, std::span<const StatePair> pairs, int a, double r, bool terminal,
                                const TDParams& p) {
  if (static_cast<int>(pairs.size()) != p.K) throw std::invalid_argument("q_update_fractional: expected K pathway pairs");
  const double rate = p.alpha / static_cast<double>(p.K);
  for (const auto& pr : pairs) q(pr.from, a) += rate * td_error(q, pr.from, a, r, pr.to, terminal, p.gamma);
}

/// Fractional transition counts n_{s,a,s'} and n_{s,a}. Successors are kept
/// sparse per (s, a) bucket, in first-seen order.
class TransitionCounts {
 public:
  struct Entry {
    int next = 0;
    double count = 0.0;
  };

  TransitionCounts(int states, int actions)
      : states_(states), actions_(actions), buckets_(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions)) {}

  int states() const noexcept { return states_; }
  int actions() const noexcept { return actions_; }

  void add(int s, int a, int s_next, double weight) {
    if (weight < 0.0) throw std::invalid_argument("TransitionCounts::add: counts never decrease");
    Bucket& b = bucket(s, a);
    b.total += weight;
    for (auto& e : b.entries) {
      if (e.next == s_next) {
        e.count += weight;
        return;
      }
    }
    b.entries.push_back({s_next, weight});
  }

  double count(int s, int a, int s_next) const {
    for (const auto& e : bucket(s, a).entries)
      if (e.next == s_next) return e.count;
    return 0.0;
  }

  double pair_count(int s, int a) const { return bucket(s, a).total; }

  std::span<const Entry> successors(int s, int a) const { return bucket(s, a).entries; }

  /// T-hat(s' | s, a); zero when (s, a) has no data.
  double probability(int s, int a, int s_next) const {
    const double n = pair_count(s, a);
    return n > 0.0 ? count(s, a, s_next) / n : 0.0;
  }

  friend bool operator==(const TransitionCounts& l, const TransitionCounts& r) {
    if (l.states_ != r.states_ || l.actions_ != r.actions_) return false;
    for (std::size_t i = 0; i < l.buckets_.size(); ++i) {
      if (l.buckets_[i].total != r.buckets_[i].total) return false;
      if (l.buckets_[i].entries.size() != r.buckets_[i].entries.size()) return false;
      for (std::size_t j = 0; j < l.buckets_[i].entries.size(); ++j) {
        const auto& a = l.buckets_[i].entries[j];
        const auto& b = r.buckets_[i].entries[j];
        if (a.next != b.next || a.count != b.count) return false;
      }
    }
    return true;
  }

 private:
  struct Bucket {
    double total = 0.0;
    std::vector<Entry> entries;
  };

  const Bucket& bucket(int s, int a) const { return buckets_.at(static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a)); }
  Bucket& bucket(int s, int a) { return buckets_.at(static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a)); }

  int states_;
  int actions_;
  std::vector<Bucket> buckets_;
};

/// Counts only fully observed tuples.
inline void t_update_conservative(TransitionCounts& t, int s, int a, int s_next, bool both_fully_observed) {
  if (both_fully_observed) t.add(s, a, s_next, 1.0);
}

/// Each pathway tuple contributes 1/K. Identical tuples are merged first and
/// added as m/K, so a synced ensemble adds exactly 1.
inline void t_update_synthetic(TransitionCounts& t, std::span<const StatePair> pairs, int a, int K) {
  if (static_cast<int>(pairs.size()) != K) throw std::invalid_argument("t_update_synthetic: expected K pathway pairs");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i && !seen; ++j) seen = pairs[j] == pairs[i];
    if (seen) continue;
    int m = 1;
    for (std::size_t j = i + 1; j < pairs.size(); ++j) m += pairs[j] == pairs[i] ? 1 : 0;
    t.add(pairs[i].from, a, pairs[i].to, static_cast<double>(m) / static_cast<double>(K));
  }
}

struct WeightedState {
  int index = 0;
  double probability = 0.0;
};

/// T-hat(. | s_prev, a) restricted to completions consistent with obs and
/// renormalized; uniform over the consistent completions when the bucket is
/// empty or puts no mass on them.
inline std::vector<WeightedState> t_conditional(const TransitionCounts& t, int s_prev, int a, const ObservedState& obs,
                                                const StateSpace& space) {
  std::vector<WeightedState> out;
  double mass = 0.0;
  for (const auto& e : t.successors(s_prev, a)) {
    if (e.count > 0.0 && space.consistent(e.next, obs)) {
      out.push_back({e.next, e.count});
      mass += e.count;
    }
  }
  if (mass > 0.0) {
    std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.index < r.index; });
    for (auto& w : out) w.probability /= mass;
    return out;
  }
  out.clear();
  const int n = space.completion_count(obs);
  for (int i = 0; i < n; ++i) out.push_back({space.index(space.completion(obs, i)), 1.0 / n});
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.index < r.index; });
  return out;
}

/// Draws one completion from t_conditional without materializing it.
/// Consumes exactly one uniform.
inline FullState sample_completion(const TransitionCounts& t, int s_prev, int a, const ObservedState& obs,
                                   const StateSpace& space, Rng& rng) {
  const auto succ = t.successors(s_prev, a);
  double mass = 0.0;
  for (const auto& e : succ)
    if (space.consistent(e.next, obs)) mass += e.count;
  const double u = rng.uniform();
  if (mass > 0.0) {
    const double target = u * mass;
    double acc = 0.0;
    int last = -1;
    for (const auto& e : succ) {
      if (e.count > 0.0 && space.consistent(e.next, obs)) {
        acc += e.count;
        last = e.next;
        if (target < acc) return space.state(e.next);
      }
    }
    return space.state(last);
  }
  const int n = space.completion_count(obs);
  const int pick = std::min(static_cast<int>(u * n), n - 1);
  return space.completion(obs, pick);
}

/// Rows `s_index,a_index,value`.
inline void write_q_dump(std::ostream& os, const QTable& q) {
  for (int s = 0; s < q.states(); ++s)
    for (int a = 0; a < q.actions(); ++a) os << s << ',' << a << ',' << format_double(q(s, a)) << '\n';
}

/// Rows `s,a,s',count` for every non-zero triple, successors in index order.
inline void write_t_dump(std::ostream& os, const TransitionCounts& t) {
  for (int s = 0; s < t.states(); ++s) {
    for (int a = 0; a < t.actions(); ++a) {
      auto succ = std::vector<TransitionCounts::Entry>(t.successors(s, a).begin(), t.successors(s, a).end());
      std::sort(succ.begin(), succ.end(), [](const auto& l, const auto& r) { return l.next < r.next; });
      for (const auto& e : succ) os << s << ',' << a << ',' << e.next << ',' << format_double(e.count) << '\n';
    }
  }
}

}  // namespace miql
