#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hpvd {

/// Deterministic random source. mt19937_64 has a standard-specified output
/// sequence, and the derived draws below avoid the implementation-defined
/// std distributions, so identical seeds give identical streams on any
/// platform and toolchain.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive. Modulo bias is below 2^-50 for
  /// the span sizes used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(eng_() % span);
  }

  /// Standard normal via Box-Muller, one cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Independent child stream; used to decouple per-study generation so the
  /// draw order of one study cannot shift another.
  Rng fork(std::uint64_t salt) {
    return Rng(next_u64() ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
  }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hpvd
