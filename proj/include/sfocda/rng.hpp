#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

#include "sfocda/errors.hpp"

namespace sfocda {

/// Counter-based deterministic RNG. State is (seed, stream, counter); every
/// draw is a pure hash of the triple, so sequences are reproducible across
/// platforms and independent per stream.
class Rng {
public:
  Rng() : Rng(0, 0) {}
  Rng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {
    key_ = mix(seed_ + 0x9e3779b97f4a7c15ull * (stream_ + 1));
  }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  uint64_t counter() const { return counter_; }

  /// Derive an independent stream; the child starts at counter 0.
  Rng split(uint64_t key) const {
    return Rng(mix(key_ ^ mix(key + 0xd1b54a32d192ed03ull)), key);
  }

  uint64_t next_u64() {
    uint64_t v = mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_);
    return v;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw ContractError("uniform_int: n must be positive");
    while (true) {
      uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      uint64_t lo = static_cast<uint64_t>(m);
      if (lo < n) {
        uint64_t thresh = (0 - n) % n;
        if (lo < thresh) continue;
      }
      return static_cast<uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
  /// so the draw count per call is fixed.
  double normal() {
    double u1 = uniform();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Symmetric Beta(alpha, alpha) via Johnk's algorithm.
  double beta(double alpha) {
    if (alpha <= 0.0) throw ContractError("beta: alpha must be positive");
    while (true) {
      double u1 = uniform();
      double u2 = uniform();
      double x = std::pow(u1, 1.0 / alpha);
      double y = std::pow(u2, 1.0 / alpha);
      if (x + y <= 1.0) {
        if (x + y > 0.0) return x / (x + y);
        // both underflowed; for tiny alpha the draw is near-Bernoulli
        return u1 < u2 ? 0.0 : 1.0;
      }
    }
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<uint32_t> permutation(uint32_t n) {
    std::vector<uint32_t> p(n);
    for (uint32_t i = 0; i < n; ++i) p[i] = i;
    for (uint32_t i = n; i > 1; --i) {
      uint32_t j = static_cast<uint32_t>(uniform_int(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  static uint64_t mix(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

private:
  uint64_t seed_ = 0;
  uint64_t stream_ = 0;
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

/// Deterministic seed derivation for hierarchies (dataset -> domain ->
/// image). Order-sensitive, collision-resistant enough for desk scale.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t h = Rng::mix(base + 0x9e3779b97f4a7c15ull);
  for (uint64_t p : path) h = Rng::mix(h ^ (p + 0x9e3779b97f4a7c15ull));
  return h;
}

}  // namespace sfocda
