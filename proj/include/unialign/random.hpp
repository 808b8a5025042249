#pragma once

// Reproducible random streams.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++
// standard. Stream seeds are derived from (seed, stream index) with the
// SplitMix64 finalizer. Uniform doubles take the top 53 bits of one draw;
// normals use the Box-Muller transform (both values of a pair are used).
// std::*_distribution is avoided because its algorithms are
// implementation-defined, which would break cross-platform reproducibility.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>

#include "unialign/geometry.hpp"

namespace unialign {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(stream_seed(seed, stream)) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    return r * std::cos(t);
  }

  Vector normal_vector(Index d, double stddev = 1.0) {
    Vector v(d);
    for (Index k = 0; k < d; ++k) v(k) = stddev * normal();
    return v;
  }

  /// Uniform on the unit sphere in R^d.
  Vector unit_vector(Index d) {
    for (;;) {
      Vector v = normal_vector(d);
      const double n = v.norm();
      if (n > kZeroNormThreshold) return v / n;
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace unialign
