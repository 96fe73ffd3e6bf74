#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "miql/rng.hpp"

namespace miql::theory {

// ---------------------------------------------------------------------------
// Fractional Q-update polynomial

/// Triangular integer table c[j][k], 2 <= j <= k <= k_max; zero elsewhere.
class CoeffTable {
 public:
  explicit CoeffTable(int k_max)
      : k_max_(k_max), c_(static_cast<std::size_t>(k_max + 2), std::vector<std::uint64_t>(static_cast<std::size_t>(k_max + 2), 0)) {}

  int k_max() const noexcept { return k_max_; }

  std::uint64_t operator()(int j, int k) const {
    if (j < 0 || k < 0 || j > k_max_ + 1 || k > k_max_ + 1) return 0;
    return c_[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
  }

  void set(int j, int k, std::uint64_t v) { c_.at(static_cast<std::size_t>(j)).at(static_cast<std::size_t>(k)) = v; }

 private:
  int k_max_;
  std::vector<std::vector<std::uint64_t>> c_;
};

namespace detail {
inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (a > std::numeric_limits<std::uint64_t>::max() - b) throw std::overflow_error("coefficient overflow");
  return a + b;
}
}  // namespace detail

/// Coefficients from the stated base cases and recursion:
/// c[k][k] = 1, c[2][k] = 3 for k >= 3, c[j][k+1] = c[j][k] + c[j-1][k] for 3 <= j <= k.
/// c[2][2] = 1 follows from the two-step expansion (coefficient of -r^2).
inline CoeffTable coeff_table(int k_max) {
  if (k_max < 2) throw std::invalid_argument("coeff_table: k_max must be >= 2");
  CoeffTable t(k_max);
  t.set(2, 2, 1);
  for (int k = 2; k < k_max; ++k) {
    t.set(2, k + 1, 3);
    for (int j = 3; j <= k; ++j) t.set(j, k + 1, detail::checked_add(t(j, k), t(j - 1, k)));
    t.set(k + 1, k + 1, 1);
  }
  return t;
}

/// Exact expansion of K sequential updates: q + (1 - (1 - r)^K) TD gives c[j][K] = C(K, j).
inline CoeffTable binomial_coeff_table(int k_max) {
  if (k_max < 2) throw std::invalid_argument("binomial_coeff_table: k_max must be >= 2");
  CoeffTable t(k_max);
  std::vector<std::uint64_t> row{1};  // row k of Pascal's triangle
  for (int k = 1; k <= k_max; ++k) {
    std::vector<std::uint64_t> next(static_cast<std::size_t>(k + 1), 1);
    for (int j = 1; j < k; ++j) next[static_cast<std::size_t>(j)] = detail::checked_add(row[static_cast<std::size_t>(j - 1)], row[static_cast<std::size_t>(j)]);
    row = std::move(next);
    for (int j = 2; j <= k; ++j) t.set(j, k, row[static_cast<std::size_t>(j)]);
  }
  return t;
}

struct IdentityReport {
  long checked = 0;
  long violations = 0;
  std::string first_violation;
};

/// Checks c[k][k] = 1, c[2][k] = 3 (k >= 3) and the recursion for 3 <= j <= k + 1, exactly.
inline IdentityReport check_coeff_identities(const CoeffTable& t) {
  IdentityReport rep;
  auto expect = [&](bool ok, const std::string& what) {
    ++rep.checked;
    if (!ok && rep.violations++ == 0) rep.first_violation = what;
  };
  for (int k = 2; k <= t.k_max(); ++k) expect(t(k, k) == 1, "c[" + std::to_string(k) + "][" + std::to_string(k) + "] != 1");
  for (int k = 3; k <= t.k_max(); ++k) expect(t(2, k) == 3, "c[2][" + std::to_string(k) + "] != 3");
  for (int k = 2; k < t.k_max(); ++k)
    for (int j = 3; j <= k + 1; ++j)
      expect(t(j, k + 1) == t(j, k) + t(j - 1, k), "recursion fails at j=" + std::to_string(j) + ", k=" + std::to_string(k));
  return rep;
}

/// sum_{j=2..K} (-1)^{j-1} c[j][K] r^j with r = alpha / K.
inline double addon_sum(const CoeffTable& t, double alpha, int K) {
  if (K < 1) throw std::invalid_argument("addon_sum: K must be >= 1");
  if (K > t.k_max()) throw std::invalid_argument("addon_sum: K exceeds table");
  const double r = alpha / K;
  double sum = 0.0;
  double rj = r;
  for (int j = 2; j <= K; ++j) {
    rj *= r;
    sum += ((j % 2 == 0) ? -1.0 : 1.0) * static_cast<double>(t(j, K)) * rj;
  }
  return sum;
}

inline double addon_magnitude(const CoeffTable& t, double alpha, int K) { return std::abs(addon_sum(t, alpha, K)); }

inline double addon_magnitude(double alpha, int K) {
  if (K == 1) return 0.0;
  return addon_magnitude(coeff_table(std::max(K, 2)), alpha, K);
}

struct FractionalCheck {
  double iterative = 0.0;
  double closed_form = 0.0;
  double deviation = 0.0;
};

/// K sub-updates at rate alpha/K on one cell with the bootstrap held fixed
/// (s != s'), against the closed form built from table t.
inline FractionalCheck verify_fractional_theorem(double q_init, double reward, double bootstrap, double alpha, int K,
                                                 const CoeffTable& t) {
  if (K < 1) throw std::invalid_argument("verify_fractional_theorem: K must be >= 1");
  const double r = alpha / K;
  const double target = reward + bootstrap;
  double q = q_init;
  for (int k = 0; k < K; ++k) q += r * (target - q);
  const double td = target - q_init;
  FractionalCheck out;
  out.iterative = q;
  out.closed_form = q_init + (K * r + (K >= 2 ? addon_sum(t, alpha, K) : 0.0)) * td;
  out.deviation = std::abs(out.iterative - out.closed_form);
  return out;
}

// ---------------------------------------------------------------------------
// Contextual bandit estimators

struct BanditSpec {
  std::vector<double> state_probs;                 // p_s
  std::vector<std::vector<double>> reward_means;   // mu[s][a]
  std::vector<std::vector<double>> reward_stds;    // sigma[s][a]
  double missing_prob = 0.0;                       // p_m
  std::vector<double> imputation_probs;            // p-hat_s, fixed
  int K = 1;
  int horizon = 1;
  int action_count = 1;

  int state_count() const { return static_cast<int>(state_probs.size()); }

  void validate() const {
    auto is_dist = [](const std::vector<double>& p) {
      double s = 0.0;
      for (double v : p) {
        if (!(v >= 0.0)) return false;
        s += v;
      }
      return !p.empty() && std::abs(s - 1.0) < 1e-9;
    };
    if (!is_dist(state_probs)) throw std::invalid_argument("BanditSpec: state_probs is not a distribution");
    if (!is_dist(imputation_probs) || imputation_probs.size() != state_probs.size())
      throw std::invalid_argument("BanditSpec: imputation_probs is not a distribution over the states");
    if (action_count < 1 || K < 1 || horizon < 1) throw std::invalid_argument("BanditSpec: counts must be positive");
    if (!(missing_prob >= 0.0 && missing_prob <= 1.0)) throw std::invalid_argument("BanditSpec: missing_prob outside [0,1]");
    auto check_grid = [&](const std::vector<std::vector<double>>& g, bool nonneg) {
      if (static_cast<int>(g.size()) != state_count()) return false;
      for (const auto& row : g) {
        if (static_cast<int>(row.size()) != action_count) return false;
        for (double v : row)
          if (nonneg && !(v >= 0.0)) return false;
      }
      return true;
    };
    if (!check_grid(reward_means, false)) throw std::invalid_argument("BanditSpec: reward_means has the wrong shape");
    if (!check_grid(reward_stds, true)) throw std::invalid_argument("BanditSpec: reward_stds has the wrong shape or a negative entry");
  }

  /// mu_a = sum_s mu[s][a] p_s
  double marginal_mean(int a) const {
    double m = 0.0;
    for (int s = 0; s < state_count(); ++s) m += reward_means[s][a] * state_probs[s];
    return m;
  }

  /// sigma_a^2 = sum_s sigma^2 p_s + sum_s mu^2 p_s - mu_a^2
  double marginal_variance(int a) const {
    double v = 0.0;
    double m2 = 0.0;
    for (int s = 0; s < state_count(); ++s) {
      v += reward_stds[s][a] * reward_stds[s][a] * state_probs[s];
      m2 += reward_means[s][a] * reward_means[s][a] * state_probs[s];
    }
    const double mu = marginal_mean(a);
    return v + m2 - mu * mu;
  }
};

/// Running sufficient statistics for the three estimators over one history.
class BanditEstimates {
 public:
  BanditEstimates(int states, int actions)
      : states_(states),
        actions_(actions),
        obs_sum_(cells(), 0.0),
        obs_n_(cells(), 0.0),
        imp_num_(cells(), 0.0),
        imp_den_(cells(), 0.0),
        imp_sq_(cells(), 0.0),
        miss_sum_(static_cast<std::size_t>(actions), 0.0),
        miss_n_(static_cast<std::size_t>(actions), 0.0) {}

  int states() const noexcept { return states_; }
  int actions() const noexcept { return actions_; }

  void record_observed(int s, int a, double r) {
    obs_sum_[cell(s, a)] += r;
    obs_n_[cell(s, a)] += 1.0;
  }

  /// share[s] is the fraction of the K imputations equal to s.
  void record_missing(int a, double r, const std::vector<double>& share) {
    miss_sum_[static_cast<std::size_t>(a)] += r;
    miss_n_[static_cast<std::size_t>(a)] += 1.0;
    for (int s = 0; s < states_; ++s) {
      const double w = share[static_cast<std::size_t>(s)];
      if (w == 0.0) continue;
      imp_num_[cell(s, a)] += w * r;
      imp_den_[cell(s, a)] += w;
      imp_sq_[cell(s, a)] += w * w;
    }
  }

  std::optional<double> mu_obs(int s, int a) const {
    const double n = obs_n_[cell(s, a)];
    if (n == 0.0) return std::nullopt;
    return obs_sum_[cell(s, a)] / n;
  }

  std::optional<double> mu_question(int a) const {
    const double n = miss_n_[static_cast<std::size_t>(a)];
    if (n == 0.0) return std::nullopt;
    return miss_sum_[static_cast<std::size_t>(a)] / n;
  }

  std::optional<double> mu_imp(int s, int a) const {
    const double d = obs_n_[cell(s, a)] + imp_den_[cell(s, a)];
    if (d == 0.0) return std::nullopt;
    return (obs_sum_[cell(s, a)] + imp_num_[cell(s, a)]) / d;
  }

  double n_observed(int s, int a) const { return obs_n_[cell(s, a)]; }
  double n_imputed(int s, int a) const { return imp_den_[cell(s, a)]; }
  double imputed_share_sq(int s, int a) const { return imp_sq_[cell(s, a)]; }
  double n_missing(int a) const { return miss_n_[static_cast<std::size_t>(a)]; }

 private:
  std::size_t cells() const { return static_cast<std::size_t>(states_) * static_cast<std::size_t>(actions_); }
  std::size_t cell(int s, int a) const { return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a); }

  int states_;
  int actions_;
  std::vector<double> obs_sum_, obs_n_, imp_num_, imp_den_, imp_sq_;
  std::vector<double> miss_sum_, miss_n_;
};

/// Mean, variance and standard error of a stream of replicate values.
class Moments {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  long count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double se() const noexcept { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct CellReport {
  int state = 0;
  int action = 0;
  double mu = 0.0;       // mu_{s,a}
  double mu_a = 0.0;     // marginal mean for the action
  Moments obs;           // mu^obs_{s,a} across replications
  Moments imp;           // mu^imp,K_{s,a}
  Moments imp_ratio;     // n-hat / (n_o + n-hat)
  Moments bias_residual; // mu^imp - [mu + (mu_a - mu) n-hat/(n_o + n-hat)], paired per replication
  Moments inv_n_obs;     // 1 / n_o
  Moments var_term1;     // n_o / (n_o + n-hat)^2
  Moments var_term2;     // sum_j p-hat_js^2 / (n_o + n-hat)^2
  Moments weight;        // n_o / (n_o + n-hat)
  long dropped_obs = 0;
  long dropped_imp = 0;

  /// Mean of the bias form with the count ratio averaged over replications.
  double bias_formula() const { return mu + (mu_a - mu) * imp_ratio.mean(); }

  /// Three-term variance expression, expectations taken over replications.
  double variance_formula(double sigma_sa2, double sigma_a2) const {
    return sigma_sa2 * var_term1.mean() + sigma_a2 * var_term2.mean() + (mu - mu_a) * (mu - mu_a) * weight.variance();
  }
};

struct ActionReport {
  int action = 0;
  double mu_a = 0.0;
  Moments question;    // mu^obs_?
  Moments inv_n_miss;  // 1 / n_{a,m}
  long dropped = 0;
};

struct EstimatorReport {
  long replications = 0;
  std::vector<CellReport> cells;      // state-major
  std::vector<ActionReport> actions;
  const CellReport& cell(int s, int a, int action_count) const { return cells.at(static_cast<std::size_t>(s * action_count + a)); }
};

/// Simulates one history of the bandit with uniformly random actions.
inline BanditEstimates simulate_bandit(const BanditSpec& spec, Rng& rng) {
  BanditEstimates est(spec.state_count(), spec.action_count);
  std::vector<double> share(static_cast<std::size_t>(spec.state_count()), 0.0);
  const double inv_k = 1.0 / spec.K;
  for (int j = 0; j < spec.horizon; ++j) {
    const auto s = static_cast<int>(rng.categorical(spec.state_probs, 1.0));
    const auto a = static_cast<int>(rng.index(static_cast<std::size_t>(spec.action_count)));
    const double r = rng.normal(spec.reward_means[s][a], spec.reward_stds[s][a]);
    if (rng.bernoulli(spec.missing_prob)) {
      std::fill(share.begin(), share.end(), 0.0);
      for (int k = 0; k < spec.K; ++k) share[rng.categorical(spec.imputation_probs, 1.0)] += inv_k;
      est.record_missing(a, r, share);
    } else {
      est.record_observed(s, a, r);
    }
  }
  return est;
}

inline EstimatorReport run_bandit_replications(const BanditSpec& spec, long R, Rng& rng) {
  spec.validate();
  EstimatorReport rep;
  rep.replications = R;
  for (int s = 0; s < spec.state_count(); ++s) {
    for (int a = 0; a < spec.action_count; ++a) {
      CellReport c;
      c.state = s;
      c.action = a;
      c.mu = spec.reward_means[s][a];
      c.mu_a = spec.marginal_mean(a);
      rep.cells.push_back(c);
    }
  }
  for (int a = 0; a < spec.action_count; ++a) rep.actions.push_back({a, spec.marginal_mean(a), {}, {}, 0});

  for (long i = 0; i < R; ++i) {
    const BanditEstimates est = simulate_bandit(spec, rng);
    for (auto& c : rep.cells) {
      const double n_o = est.n_observed(c.state, c.action);
      const double n_hat = est.n_imputed(c.state, c.action);
      if (auto v = est.mu_obs(c.state, c.action)) {
        c.obs.add(*v);
        c.inv_n_obs.add(1.0 / n_o);
      } else {
        ++c.dropped_obs;
      }
      if (auto v = est.mu_imp(c.state, c.action)) {
        const double d = n_o + n_hat;
        const double ratio = n_hat / d;
        c.imp.add(*v);
        c.imp_ratio.add(ratio);
        c.bias_residual.add(*v - (c.mu + (c.mu_a - c.mu) * ratio));
        c.var_term1.add(n_o / (d * d));
        c.var_term2.add(est.imputed_share_sq(c.state, c.action) / (d * d));
        c.weight.add(n_o / d);
      } else {
        ++c.dropped_imp;
      }
    }
    for (auto& ar : rep.actions) {
      if (auto v = est.mu_question(ar.action)) {
        ar.question.add(*v);
        ar.inv_n_miss.add(1.0 / est.n_missing(ar.action));
      } else {
        ++ar.dropped;
      }
    }
  }
  return rep;
}

enum class SelectRule { Substitute = 10, QuestionMean = 11, ImputationMean = 12 };

/// Greedy action under one of the three selection rules. Undefined estimators
/// rank below every defined one; ties go to the lowest action index.
/// `observed` is the state when visible; `imputed` stands in otherwise.
inline int bandit_action_select(SelectRule rule, const BanditEstimates& est, std::optional<int> observed, int imputed) {
  const int s = observed ? *observed : imputed;
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (int a = 0; a < est.actions(); ++a) {
    std::optional<double> v;
    switch (rule) {
      case SelectRule::Substitute: v = est.mu_obs(s, a); break;
      case SelectRule::ImputationMean: v = est.mu_imp(s, a); break;
      case SelectRule::QuestionMean: v = observed ? est.mu_obs(*observed, a) : est.mu_question(a); break;
    }
    if (v && (!have || *v > best_v)) {
      best = a;
      best_v = *v;
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Transition estimators for one (s, a, c) triple

enum class ChainVariant { Oracle = 1, ObservedOnly = 2, EstimateBased = 3, Recursive = 4 };

/// Simulates X_j ~ Bernoulli(p) with each outcome missing at rate p_m and
/// returns the estimate after every step. Missing outcomes receive K
/// imputations drawn from p (oracle), from the observed-only estimate, or from
/// the estimator itself; `normalize` applies the 1/K weight. Before any data
/// the estimate and the imputation source are 0.5.
inline std::vector<double> transition_estimator_chain(double p, double p_m, int K, int T, ChainVariant variant, Rng& rng,
                                                      bool normalize = true) {
  if (K < 1 || T < 0) throw std::invalid_argument("transition_estimator_chain: K >= 1 and T >= 0 required");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(T));
  double n_obs = 0.0, n_obs_c = 0.0, n_all = 0.0, imputed = 0.0;
  const double w = normalize ? 1.0 / K : 1.0;
  auto observed_only = [&] { return n_obs > 0.0 ? n_obs_c / n_obs : 0.5; };
  auto pooled = [&] { return n_all > 0.0 ? (n_obs_c + imputed) / n_all : 0.5; };
  for (int j = 0; j < T; ++j) {
    const bool x = rng.bernoulli(p);
    const bool missing = rng.bernoulli(p_m);
    if (!missing) {
      n_obs += 1.0;
      n_obs_c += x ? 1.0 : 0.0;
      n_all += 1.0;
    } else if (variant != ChainVariant::ObservedOnly) {
      double source = p;
      if (variant == ChainVariant::EstimateBased) source = observed_only();
      if (variant == ChainVariant::Recursive) source = pooled();
      double hits = 0.0;
      for (int k = 0; k < K; ++k) hits += rng.bernoulli(source) ? 1.0 : 0.0;
      imputed += w * hits;
      n_all += 1.0;
    }
    out.push_back(variant == ChainVariant::ObservedOnly ? observed_only() : pooled());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variance of the mean-of-running-averages estimator

/// Var(p-tilde_t) / Var(p-hat_t) in closed form, with the running-average mean
/// over j = 1..t: t * sum_i (p_o/t + (1 - p_o) w_i)^2, w_i = (1/t) sum_{j>=i} 1/j.
inline double variance_ratio_exact(double p_o, int t) {
  if (t < 1) throw std::invalid_argument("variance_ratio_exact: t must be >= 1");
  double tail = 0.0;  // sum_{j=i..t} 1/j, built from i = t downwards
  double acc = 0.0;
  for (int i = t; i >= 1; --i) {
    tail += 1.0 / i;
    const double c = p_o / t + (1.0 - p_o) * tail / t;
    acc += c * c;
  }
  return t * acc;
}

struct RatioPoint {
  int t = 0;
  double ratio = 0.0;  // Monte Carlo
  double se = 0.0;     // delta method
  double exact = 0.0;
  double var_tilde = 0.0;
  double var_hat = 0.0;
};

/// Monte Carlo variance ratio per horizon. Each horizon uses its own R
/// replications, so ratios at different horizons are independent.
inline std::vector<RatioPoint> variance_ratio_curve(double p, double p_o, const std::vector<int>& t_grid, long R, Rng& rng) {
  if (R < 2) throw std::invalid_argument("variance_ratio_curve: need at least 2 replications");
  std::vector<RatioPoint> out;
  std::vector<double> a(static_cast<std::size_t>(R)), b(static_cast<std::size_t>(R));
  for (const int t : t_grid) {
    if (t < 1) throw std::invalid_argument("variance_ratio_curve: horizons must be >= 1");
    for (long r = 0; r < R; ++r) {
      double sum = 0.0, mean_sum = 0.0;
      for (int j = 1; j <= t; ++j) {
        sum += rng.bernoulli(p) ? 1.0 : 0.0;
        mean_sum += sum / j;
      }
      const double hat = sum / t;
      b[static_cast<std::size_t>(r)] = hat;
      a[static_cast<std::size_t>(r)] = p_o * hat + (1.0 - p_o) * mean_sum / t;
    }
    double ma = 0.0, mb = 0.0;
    for (long r = 0; r < R; ++r) {
      ma += a[static_cast<std::size_t>(r)];
      mb += b[static_cast<std::size_t>(r)];
    }
    ma /= static_cast<double>(R);
    mb /= static_cast<double>(R);
    double va = 0.0, vb = 0.0, a4 = 0.0, b4 = 0.0, ab22 = 0.0;
    for (long r = 0; r < R; ++r) {
      const double da = a[static_cast<std::size_t>(r)] - ma;
      const double db = b[static_cast<std::size_t>(r)] - mb;
      va += da * da;
      vb += db * db;
      a4 += da * da * da * da;
      b4 += db * db * db * db;
      ab22 += da * da * db * db;
    }
    const auto n = static_cast<double>(R);
    a4 /= n;
    b4 /= n;
    ab22 /= n;
    const double pa = va / n, pb = vb / n;  // plug-in second moments for the delta method
    va /= n - 1.0;
    vb /= n - 1.0;
    RatioPoint pt;
    pt.t = t;
    pt.var_tilde = va;
    pt.var_hat = vb;
    pt.exact = variance_ratio_exact(p_o, t);
    if (vb > 0.0) {
      pt.ratio = va / vb;
      const double rel = (a4 - pa * pa) / (pa * pa) + (b4 - pb * pb) / (pb * pb) - 2.0 * (ab22 - pa * pb) / (pa * pb);
      pt.se = pt.ratio * std::sqrt(std::max(rel, 0.0) / n);
    } else {
      pt.ratio = std::nan("");
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace miql::theory
