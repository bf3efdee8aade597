#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace platoon {

// Deterministic RNG facade. mt19937_64 has a fixed spec, but the std
// distributions do not, so every draw here is derived from raw 64-bit words
// with an explicit algorithm. Identical seeds give identical streams on any
// conforming implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_mix_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1): top 53 bits scaled by 2^-53.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n); n must be positive. Rejection-free modulo is
  // fine here: n is tiny relative to 2^64 so bias is far below any tolerance
  // in this codebase, and the result stays implementation-independent.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(engine_() % static_cast<std::uint64_t>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  // Stable sub-stream derivation so parallel consumers never share state.
  std::uint64_t derive(std::uint64_t salt) const {
    std::uint64_t x = seed_mix_ ^ (0x9e3779b97f4a7c15ULL + salt);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

  explicit Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(seed ^ (stream * 0x9e3779b97f4a7c15ULL)), seed_mix_(seed) {}

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_mix_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Convenience: derive a child seed from (root seed, salt) without
// constructing an Rng.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
  std::uint64_t x = root ^ (0x9e3779b97f4a7c15ULL + salt);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace platoon
