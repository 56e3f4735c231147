#pragma once

#include <cmath>
#include <cstdint>

#include "gsavatar/core/common.hpp"

namespace gsavatar {

// Deterministic splitmix64 stream; identical sequences on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : state_(seed * 0x9E3779B97F4A7C15ULL + stream * 0xBF58476D1CE4E5B9ULL + 1ULL) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  real uniform() { return real(next_u64() >> 11) * 0x1.0p-53; }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  real normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    real u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    real r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * kPi * u2);
    has_cached_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  bool bernoulli(real p) { return uniform() < p; }

 private:
  uint64_t state_;
  bool has_cached_ = false;
  real cached_ = 0;
};

}  // namespace gsavatar
