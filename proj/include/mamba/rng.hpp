#pragma once

#include <cstdint>

namespace mamba {

/// SplitMix64 stream. The integer sequence is fixed by the seed on every
/// platform; std::*_distribution is avoided because its output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  /// Independent child stream, e.g. one per layer.
  Rng fork() noexcept { return Rng(next_u64()); }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace mamba
