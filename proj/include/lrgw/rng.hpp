#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

#include "lrgw/errors.hpp"

namespace lrgw {

// Counter-based deterministic generator. Draw i is a pure function of
// (seed, i), so the sampling sequence is bit-identical across platforms and
// independent of call-site interleaving. Streams derived with substream()
// are independent of each other.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() { return mix(seed_ + (++counter_) * kGolden); }

  // Uniform in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the paired draw is cached so each normal consumes one
  // uniform pair per two calls.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  // Index in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw input_error("uniform_index: empty range");
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

  // Index distributed proportionally to the (nonnegative) weights.
  std::size_t discrete(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w))
        throw input_error("discrete: weights must be finite and >= 0");
      total += w;
    }
    if (total <= 0.0)
      throw input_error("discrete: all weights are zero");
    double target = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      target -= weights[i];
      if (target < 0.0) return i;
    }
    return weights.size() - 1;
  }

  // Independent stream for a named sub-task.
  CounterRng substream(std::uint64_t tag) const {
    return CounterRng(mix(seed_ ^ mix(tag)));
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace lrgw
