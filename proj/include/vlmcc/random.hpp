#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "vlmcc/error.hpp"

namespace vlmcc {

// ─── deterministic seeding ───
//
// Every randomized component derives its own mt19937_64 stream from a user
// seed plus structural context (scene id, sample index, iteration).  The
// mixing below is fixed so the same inputs give the same stream on every
// platform and at every thread count.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Folds any number of 64-bit parts into one seed, order-sensitive.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, Parts... parts) {
  std::uint64_t h = splitmix64(base);
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

// mt19937_64 is fully specified by the standard; the helpers below avoid
// std::uniform_*_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw DomainError("Rng::uniform: empty interval");
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vlmcc
