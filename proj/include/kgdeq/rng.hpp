#pragma once

// Deterministic, platform-independent random number generation.
//
// Two use cases drive the design:
//  - plain seeded streams (weight init, graph generators, shuffles);
//  - counter-keyed draws, where the value depends only on a (seed, key...)
//    tuple and not on how many draws happened before. Negative sampling and
//    evaluation use these so results are invariant to query order and so
//    permutation-invariance properties of training are testable.
//
// Everything is built on splitmix64, which is tiny, fast and well mixed.

#include <array>
#include <cstdint>
#include <vector>

#include "kgdeq/common.hpp"

namespace kgdeq {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mix an arbitrary list of 64-bit words into one seed value.
inline std::uint64_t mix_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;  // arbitrary nonzero start
  for (std::uint64_t w : words) h = splitmix64(h ^ w);
  return h;
}

// Small deterministic generator. Stream position is part of the state, so a
// generator constructed from the same seed always yields the same sequence.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  static Rng keyed(std::initializer_list<std::uint64_t> words) { return Rng(mix_key(words)); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform integer in [0, n) without modulo bias (rejection sampling).
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Uniform permutation of [0, n) as a vector p with p[i] = image of i.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

private:
  std::uint64_t state_;
};

}  // namespace kgdeq
