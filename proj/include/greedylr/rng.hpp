// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rng.hpp
 * @brief  Counter-based random streams.
 *
 * Every draw is a pure function of (key, counter), so two runs that derive
 * the same key see the same sequence no matter what else they do. Runs split
 * their randomness into tagged substreams (component sampling, noise, data
 * generation) so that changing how one substream is consumed never shifts
 * another.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace greedylr {

enum class StreamTag : std::uint64_t {
  sampling = 1,
  noise = 2,
  problem_data = 3,
  initial_point = 4,
};

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t seed, StreamTag tag,
                                   std::uint64_t index = 0) {
  std::uint64_t k = mix64(seed + 0x9e3779b97f4a7c15ULL);
  k = mix64(k ^ (static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL));
  return mix64(k ^ (index * 0x8cb92ba72f3d8dd7ULL + 0x632be59bd9b4e019ULL));
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}
  RngStream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0)
      : key_(derive_key(seed, tag, index)) {}

  std::uint64_t next_u64() {
    return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
  }

  /// Standard normal by Box-Muller; one pair of uniforms per draw, no cache,
  /// so the number of counter ticks per call is fixed.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace greedylr
