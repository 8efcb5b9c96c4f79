#pragma once

// Counter-based SplitMix64 generator. Output k of stream s under seed x is
//   mix64(key(x, s) + (k + 1) * 0x9E3779B97F4A7C15)
// with mix64 the SplitMix64 finalizer, so any implementation reproduces a
// seed's stream exactly. Gaussians use the Box-Muller transform (both
// outputs consumed in order); Laplace draws use the inverse CDF.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace shica {

class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Laplace(0, scale); variance 2 scale^2.
  double laplace(double scale) noexcept {
    const double u = uniform_open() - 0.5;
    return -scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace shica
