/**
 * @file random.hpp
 * @brief Portable random streams and Poisson sampling.
 *
 * Streams are std::mt19937_64, whose output sequence is fixed by the C++
 * standard. Uniform doubles take the top 53 bits. Poisson variates use
 * sequential inversion for mean < 10 and Hörmann's transformed rejection
 * (PTRS, 1993) above that. std::poisson_distribution is not used because its
 * algorithm differs between standard libraries.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "polent/types.hpp"

namespace polent {

/// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for sub-stream `index` of a run seeded with `seed`.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
      throw DomainError("poisson: mean must be finite and >= 0");
    }
    if (mean == 0.0) return 0;
    if (mean < 10.0) return poisson_inversion(mean);
    return poisson_ptrs(mean);
  }

 private:
  std::uint64_t poisson_inversion(double mean) {
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    // The cap guards against round-off leaving cdf just below u.
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }

  std::uint64_t poisson_ptrs(double mean) {
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::abs(u);
      const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      const double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
      const double rhs = -mean + k * log_mean - std::lgamma(k + 1.0);
      if (lhs <= rhs) return static_cast<std::uint64_t>(k);
    }
  }

  std::mt19937_64 engine_;
};

}  // namespace polent
