#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace grumo {

// SplitMix64 with the reference constants (increment 0x9E3779B97F4A7C15,
// mixers 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB). Every seeded draw in the
// project goes through this generator; platform RNGs and
// std::*_distribution are deliberately not used anywhere.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // Box-Muller. One fresh pair per call; the second value is discarded so
  // the stream position never depends on call parity.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from (base, salt).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  SplitMix64 r(base ^ (0x9E3779B97F4A7C15ull * (salt + 1)));
  return r.next();
}

}  // namespace grumo
