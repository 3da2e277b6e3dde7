#pragma once

// Deterministic, portable random streams.
//
// Generator: SplitMix64. The state is a 64-bit counter advanced by the golden
// gamma 0x9E3779B97F4A7C15 per draw; each output is the counter passed through
// the finalizer
//
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
//
// Stream splitting: the seed for run i of an experiment with master seed s is
// mix64(s ^ mix64(i + 0x9E3779B97F4A7C15)), where mix64 is the finalizer above.
// Uniform doubles take the top 53 bits: (u >> 11) * 2^-53, in [0, 1).
// Normals use Box-Muller on a pair (u1, u2) with u1 mapped to (0, 1]; both
// outputs are consumed in order (r cos, then r sin) so that streams stay aligned
// regardless of how many normals a caller needs.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace meanfield::rng {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index + kGoldenGamma));
}

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }
  constexpr std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  // [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Index in [0, n) via the inverse-CDF of a uniform draw.
  std::size_t below(std::size_t n) {
    auto k = static_cast<std::size_t>(uniform() * double(n));
    return k < n ? k : n - 1;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace meanfield::rng
