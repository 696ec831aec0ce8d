#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "microsim/numeric/tensor.hpp"

namespace microsim {

/// Counter-based generator: draw k of a stream with seed s is
/// splitmix64_finalize(s + k * 0x9E3779B97F4A7C15). The output depends only on
/// (seed, counter), so sequences are identical on every platform with IEEE
/// doubles.
///
/// Uniforms take the top 53 bits. Normals use Box-Muller on two consecutive
/// uniforms and return the cosine branch only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n) by rejection-free multiply-high (Lemire); bias < 2^-64 * n.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Independent child stream.
  Rng split(std::uint64_t stream) {
    Rng child(next_u64() ^ (stream * 0xD1B54A32D192ED03ULL));
    return child;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

enum class Distribution { standard_normal, uniform01 };

inline Tensor sample(Rng& rng, Distribution dist, Shape shape, bool requires_grad = false) {
  if (shape.empty() || shape_size(shape) == 0) {
    throw ShapeError("sample: empty shape " + shape_string(shape));
  }
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist == Distribution::standard_normal ? rng.normal() : rng.uniform01();
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace microsim
