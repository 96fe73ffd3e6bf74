#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "miql/format.hpp"
#include "miql/rng.hpp"
#include "miql/tabular.hpp"
#include "miql/theory.hpp"

namespace miql::verify {

struct CheckResult {
  std::string id;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr std::uint64_t kDefaultSeed = 20240611;

namespace detail {

template <typename F>
CheckResult timed(std::string id, std::string name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.id = std::move(id);
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string sci(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << std::scientific << v;
  return os.str();
}

inline std::string fix(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << std::fixed << v;
  return os.str();
}

}  // namespace detail

/// Base cases and recursion of the stated coefficient table, integer equality.
inline CheckResult coefficient_recursion(int k_max = 50) {
  return detail::timed("a3.coefficients", "coefficient recursion (K_max=" + std::to_string(k_max) + ")", [&] {
    CheckResult r;
    const auto t = theory::coeff_table(k_max);
    const auto rep = theory::check_coeff_identities(t);
    r.passed = rep.violations == 0;
    r.detail = std::to_string(rep.checked) + " identities checked, " + std::to_string(rep.violations) + " violations";
    if (!rep.first_violation.empty()) r.detail += " (first: " + rep.first_violation + ")";
    r.detail += "; c[3][4]=" + std::to_string(t(3, 4)) + ", c[2][50]=" + std::to_string(t(2, 50));
    return r;
  });
}

/// Iterative K-cycle against the closed form on 1000 random instances, and
/// the add-on magnitude bound for K >= 5 at alpha = 1.
inline CheckResult fractional_theorem(std::uint64_t seed = kDefaultSeed, int instances = 1000) {
  return detail::timed("a3.closed_form", "fractional-update closed form and add-on bound", [&] {
    CheckResult r;
    Rng rng(derive_seed(seed, Stream::Oracle));
    const auto stated = theory::coeff_table(20);
    const auto exact = theory::binomial_coeff_table(20);
    double worst_stated = 0.0, worst_exact = 0.0;
    int worst_k = 0;
    double worst_alpha = 0.0;
    for (int i = 0; i < instances; ++i) {
      const double q = -10.0 + 20.0 * rng.uniform();
      const double reward = -10.0 + 20.0 * rng.uniform();
      const double boot = -10.0 + 20.0 * rng.uniform();
      const double alpha = rng.bernoulli(0.5) ? 1.0 : 0.1;
      const int K = 1 + static_cast<int>(rng.index(20));
      const double d = theory::verify_fractional_theorem(q, reward, boot, alpha, K, stated).deviation;
      if (d > worst_stated) {
        worst_stated = d;
        worst_k = K;
        worst_alpha = alpha;
      }
      worst_exact = std::max(worst_exact, theory::verify_fractional_theorem(q, reward, boot, alpha, K, exact).deviation);
    }
    double worst_addon = 0.0;
    int worst_addon_k = 0;
    // K = 50 keeps the stated table inside 64-bit integers.
    const auto big = theory::coeff_table(50);
    for (int K = 5; K <= 50; ++K) {
      const double m = theory::addon_magnitude(big, 1.0, K);
      if (m > worst_addon) {
        worst_addon = m;
        worst_addon_k = K;
      }
    }
    const bool closed_ok = worst_stated < 1e-10;
    const bool addon_ok = worst_addon < 1e-2;
    r.passed = closed_ok && addon_ok;
    r.detail = "max |iterative - closed| = " + detail::sci(worst_stated) + " (K=" + std::to_string(worst_k) +
               ", alpha=" + format_double(worst_alpha) + ", limit 1e-10); max add-on over K=5..50 at alpha=1 = " +
               detail::sci(worst_addon) + " (K=" + std::to_string(worst_addon_k) + ", limit 1e-2); binomial coefficients: max deviation " +
               detail::sci(worst_exact) + ", add-on at K=10 = " + detail::fix(theory::addon_magnitude(theory::binomial_coeff_table(10), 1.0, 10));
    return r;
  });
}

/// Row sums of T-hat after mixed synthetic updates, and synthetic versus
/// conservative counts on fully observed streams.
inline CheckResult transition_normalization(std::uint64_t seed = kDefaultSeed, int updates = 100000) {
  return detail::timed("a1.normalization", "transition normalization", [&] {
    CheckResult r;
    Rng rng(derive_seed(seed + 1, Stream::Oracle));
    const int S = 192, A = 8, K = 5;
    TransitionCounts synth(S, A);
    std::vector<StatePair> pairs(K);
    long imputed_steps = 0;
    for (int i = 0; i < updates; ++i) {
      const int s = static_cast<int>(rng.index(S));
      const int a = static_cast<int>(rng.index(A));
      const bool observed = rng.bernoulli(0.5);
      const int sn = static_cast<int>(rng.index(S));
      for (auto& p : pairs) {
        p.from = observed ? s : static_cast<int>(rng.index(S));
        p.to = observed ? sn : static_cast<int>(rng.index(S));
      }
      imputed_steps += observed ? 0 : 1;
      t_update_synthetic(synth, pairs, a, K);
    }
    double worst = 0.0;
    long visited = 0;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        if (synth.pair_count(s, a) <= 0.0) continue;
        ++visited;
        double sum = 0.0;
        for (const auto& e : synth.successors(s, a)) sum += synth.probability(s, a, e.next);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    TransitionCounts cons(S, A), syn2(S, A);
    std::vector<StatePair> same(K);
    for (int i = 0; i < updates; ++i) {
      const int s = static_cast<int>(rng.index(S));
      const int a = static_cast<int>(rng.index(A));
      const int sn = static_cast<int>(rng.index(S));
      for (auto& p : same) p = {s, sn};
      t_update_conservative(cons, s, a, sn, true);
      t_update_synthetic(syn2, same, a, K);
    }
    double gap = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        gap = std::max(gap, std::abs(cons.pair_count(s, a) - syn2.pair_count(s, a)));
        for (const auto& e : cons.successors(s, a)) gap = std::max(gap, std::abs(e.count - syn2.count(s, a, e.next)));
        for (const auto& e : syn2.successors(s, a)) gap = std::max(gap, std::abs(e.count - cons.count(s, a, e.next)));
      }
    }
    r.passed = worst <= 1e-9 && gap < 1e-12;
    r.detail = std::to_string(updates) + " synthetic updates (" + std::to_string(imputed_steps) + " imputed), " +
               std::to_string(visited) + " visited pairs, max |sum T - 1| = " + detail::sci(worst) +
               " (limit 1e-9); max |synthetic - conservative| = " + detail::sci(gap) + " (limit 1e-12)";
    return r;
  });
}

/// The bandit used for the estimator checks: two states, two actions.
inline theory::BanditSpec reference_bandit(int K) {
  theory::BanditSpec b;
  b.state_probs = {0.7, 0.3};
  b.reward_means = {{1.0, 0.2}, {0.0, 0.8}};
  b.reward_stds = {{1.0, 0.5}, {0.5, 1.0}};
  b.missing_prob = 0.4;
  b.imputation_probs = {0.5, 0.5};
  b.K = K;
  b.horizon = 200;
  b.action_count = 2;
  return b;
}

/// Unbiasedness of the observed estimators, the bias form and the variance
/// expression of the imputation estimator.
inline CheckResult bandit_estimators(std::uint64_t seed = kDefaultSeed, long R = 10000) {
  return detail::timed("a2.bandit", "bandit estimator mean/variance", [&] {
    CheckResult r;
    r.passed = true;
    std::ostringstream d;
    for (const int K : {1, 5}) {
      Rng rng(derive_seed(seed + static_cast<std::uint64_t>(K), Stream::Oracle));
      const auto spec = reference_bandit(K);
      const auto rep = theory::run_bandit_replications(spec, R, rng);
      double worst_obs = 0.0, worst_bias = 0.0, worst_var = 0.0, worst_q = 0.0;
      for (const auto& c : rep.cells) {
        const double z_obs = std::abs(c.obs.mean() - c.mu) / c.obs.se();
        const double z_bias = std::abs(c.bias_residual.mean()) / c.bias_residual.se();
        const double sigma_sa2 = spec.reward_stds[c.state][c.action] * spec.reward_stds[c.state][c.action];
        const double formula = c.variance_formula(sigma_sa2, spec.marginal_variance(c.action));
        const double rel = std::abs(c.imp.variance() - formula) / formula;
        worst_obs = std::max(worst_obs, z_obs);
        worst_bias = std::max(worst_bias, z_bias);
        worst_var = std::max(worst_var, rel);
        if (K == 1) {
          d << "s" << c.state << "a" << c.action << ": E[obs]=" << detail::fix(c.obs.mean()) << " mu=" << format_double(c.mu)
            << ", E[imp]=" << detail::fix(c.imp.mean()) << " bias form=" << detail::fix(c.bias_formula())
            << ", Var[imp]=" << detail::sci(c.imp.variance()) << " formula=" << detail::sci(formula) << "; ";
        }
      }
      for (const auto& a : rep.actions) worst_q = std::max(worst_q, std::abs(a.question.mean() - a.mu_a) / a.question.se());
      const bool ok = worst_obs <= 3.0 && worst_q <= 3.0 && worst_bias <= 3.0 && worst_var <= 0.10;
      r.passed = r.passed && ok;
      d << "K=" << K << ": max z(obs)=" << detail::fix(worst_obs, 2) << ", max z(?)=" << detail::fix(worst_q, 2)
        << ", max z(bias)=" << detail::fix(worst_bias, 2) << ", max rel var err=" << detail::fix(100 * worst_var, 2) << "%"
        << (ok ? "" : " FAIL") << "; ";
    }
    d << "R=" << R << ", T=200";
    r.detail = d.str();
    return r;
  });
}

/// Monte Carlo variance ratio at increasing horizons, each step required to
/// rise by more than 2 standard errors.
inline CheckResult variance_ordering(std::uint64_t seed = kDefaultSeed, long R = 10000) {
  return detail::timed("a1.variance_ratio", "variance ratio increasing in t", [&] {
    CheckResult r;
    Rng rng(derive_seed(seed + 7, Stream::Oracle));
    const auto curve = theory::variance_ratio_curve(0.3, 0.5, {10, 100, 1000}, R, rng);
    r.passed = true;
    std::ostringstream d;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      d << "t=" << curve[i].t << ": " << detail::fix(curve[i].ratio) << " +/- " << detail::fix(curve[i].se)
        << " (exact " << detail::fix(curve[i].exact) << ")";
      if (i + 1 < curve.size()) {
        const double diff = curve[i + 1].ratio - curve[i].ratio;
        const double se = std::hypot(curve[i].se, curve[i + 1].se);
        const bool up = diff > 2.0 * se;
        r.passed = r.passed && up;
        d << "; step " << detail::fix(diff) << " vs 2SE " << detail::fix(2 * se) << (up ? " ok" : " NOT SIGNIFICANT") << "; ";
      }
    }
    d << "; limit as t grows = " << detail::fix(1.0 + 0.25) << " (1 + (1-p_o)^2)";
    r.detail = d.str();
    return r;
  });
}

/// Law of large numbers for the observed-only estimator and the effect of
/// dropping the 1/K weight.
inline CheckResult chain_estimators(std::uint64_t seed = kDefaultSeed) {
  return detail::timed("a1.chain", "transition estimator chain", [&] {
    CheckResult r;
    const double p = 0.3, pm = 0.5;
    const int T = 100000, K = 5;
    Rng rng(derive_seed(seed + 11, Stream::Oracle));
    const double obs_only = theory::transition_estimator_chain(p, pm, K, T, theory::ChainVariant::ObservedOnly, rng).back();
    const double se = std::sqrt(p * (1 - p) / (T * (1 - pm)));
    const double oracle = theory::transition_estimator_chain(p, pm, K, T, theory::ChainVariant::Oracle, rng).back();
    const double unnorm = theory::transition_estimator_chain(p, pm, K, T, theory::ChainVariant::Oracle, rng, false).back();
    const double unnorm_limit = p * (1 - pm) + K * p * pm;
    const double oracle_se = std::sqrt(p * (1 - p) * ((1 - pm) + pm / K) / T);
    const bool ok = std::abs(obs_only - p) <= 3 * se && std::abs(oracle - p) <= 3 * oracle_se &&
                    std::abs(unnorm - unnorm_limit) < 0.02;
    r.passed = ok;
    r.detail = "observed-only " + detail::fix(obs_only) + " (p=0.3, 3SE=" + detail::fix(3 * se) + "); oracle " + detail::fix(oracle) +
               "; without 1/K " + detail::fix(unnorm) + " (limit " + detail::fix(unnorm_limit) + ")";
    return r;
  });
}

/// Which checks belong to which oracle group.
inline std::vector<std::function<CheckResult()>> checks_for(const std::string& theorem, std::uint64_t seed) {
  std::vector<std::function<CheckResult()>> out;
  const bool all = theorem == "all";
  if (all || theorem == "a1") {
    out.push_back([=] { return transition_normalization(seed); });
    out.push_back([=] { return chain_estimators(seed); });
    out.push_back([=] { return variance_ordering(seed); });
  }
  if (all || theorem == "a2") out.push_back([=] { return bandit_estimators(seed); });
  if (all || theorem == "a3") {
    out.push_back([] { return coefficient_recursion(); });
    out.push_back([=] { return fractional_theorem(seed); });
  }
  return out;
}

inline void write_report_csv(std::ostream& os, const std::vector<CheckResult>& results) {
  os << "id,name,passed,seconds,detail\n";
  for (const auto& r : results) {
    std::string d = r.detail;
    std::string q = "\"";
    for (char c : d) {
      if (c == '"') q += '"';
      q += c;
    }
    os << r.id << ",\"" << r.name << "\"," << (r.passed ? "true" : "false") << ',' << detail::fix(r.seconds, 3) << ',' << q << "\"\n";
  }
}

}  // namespace miql::verify
