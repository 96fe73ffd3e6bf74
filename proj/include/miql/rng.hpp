#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

namespace miql {

/// SplitMix64 finalizer. Used only to derive independent engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Named sub-streams of a trial seed.
enum class Stream : std::uint64_t { Environment = 1, Missingness = 2, Agent = 3, Oracle = 4 };

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64(stream * 0xD1B54A32D192ED03ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream) noexcept {
  return derive_seed(base, static_cast<std::uint64_t>(stream));
}

/// Random stream with platform-independent variate generation.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// standard distributions are not, so the conversions live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// p <= 0 never fires, p >= 1 always fires. Consumes exactly one draw.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer on [0, n), unbiased (rejection on the top range).
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  /// Box-Muller; consumes two uniforms per call.
  double normal(double mean, double sd) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + sd * z;
  }

  /// Index drawn from unnormalized non-negative weights.
  template <typename Weights>
  std::size_t categorical(const Weights& weights, double total) {
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    std::size_t i = 0;
    for (const double w : weights) {
      if (w > 0.0) {
        acc += w;
        last_positive = i;
        if (target < acc) return i;
      }
      ++i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace miql
