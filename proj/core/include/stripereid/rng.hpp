#pragma once

#include <cstdint>
#include <string_view>

namespace stripereid {

/// SplitMix64 generator (Steele, Lea & Flood, 2014).
///
/// This is the only random source in the library. Every draw is a pure
/// function of the 64-bit state, so results are identical across platforms
/// and standard-library implementations. Changing the generator, the
/// uniform/normal transforms below, or derive_seed() changes every golden
/// value in the test suite and requires bumping kRngVersion.
class SplitMix64 {
 public:
  static constexpr std::uint32_t kRngVersion = 1;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) built from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound) by rejection. bound must be > 0.
  std::uint64_t uniform_int(std::uint64_t bound) noexcept;

  /// Standard normal via the Box-Muller transform (one value per call; the
  /// paired value is discarded so every call consumes exactly two draws).
  double normal() noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Derives an independent child seed from a parent seed and a stream label.
/// Used to give augmentation, sampling, masks and initialization their own
/// streams so that changing one never shifts the draws of another.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace stripereid
