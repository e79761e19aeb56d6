// Copyright (c) 2026 FixRes Lab Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FIXRES_RNG_HPP_
#define FIXRES_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace fixres {

/** One round of the splitmix64 output function (pure, does not advance state). */
inline uint64_t splitmix64_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/**
 * Seed for an independent RNG stream: seed XOR splitmix64(index).
 * Samples, workers, and per-epoch shuffles each get their own stream so
 * results are identical no matter how work is divided across threads.
 */
inline uint64_t derive_stream(uint64_t seed, uint64_t index) {
  return seed ^ splitmix64_mix(index);
}

/**
 * Deterministic RNG with portable distributions.
 *
 * The engine is std::mt19937_64 (its sequence is pinned by the standard);
 * the distribution transforms below are written out explicitly because the
 * std::*_distribution algorithms vary across standard libraries.
 */
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /** Uniform double in [0, 1) with 53 random bits. */
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /** Uniform double in [lo, hi); returns lo when lo == hi. */
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  /** Uniform integer in the inclusive range [lo, hi]. */
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(engine_());  // full 64-bit range
    // Rejection sampling keeps the draw exactly uniform.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<int64_t>(r % span);
  }

  /** Standard normal via Box-Muller (pairs cached). */
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace fixres

#endif  // FIXRES_RNG_HPP_
