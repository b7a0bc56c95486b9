#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qsym {

/// Seeded random stream. Gaussian draws use Box-Muller over the raw 64-bit
/// generator instead of std::normal_distribution, whose output differs
/// between standard libraries; this keeps seeded runs bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace qsym
