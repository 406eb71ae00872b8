#pragma once

#include <cstdint>
#include <string_view>

namespace specklenet {

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a child seed from a parent seed and a stream label/index. Every
/// random quantity in the toolkit is seeded through this so that results do
/// not depend on evaluation order or worker count.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                          std::uint64_t index = 0) noexcept;

/// xoshiro256** generator with portable uniform/normal draws. The standard
/// library distributions are implementation-defined, which would break
/// bit-identical regeneration across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
  /// Standard normal via Box-Muller (pairs cached).
  double normal() noexcept;

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace specklenet
