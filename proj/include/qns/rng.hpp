#pragma once

#include <cstdint>
#include <random>

namespace qns {

/// Seeded generator with distributions written out explicitly so that a seed
/// produces the same stream under every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal by Box-Muller.
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t index(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Decorrelates a (seed, stream) pair into a child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace qns
