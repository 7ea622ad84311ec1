#include "stripereid/rng.hpp"

#include <cmath>
#include <numbers>

namespace stripereid {

std::uint64_t SplitMix64::uniform_int(std::uint64_t bound) noexcept {
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % bound;
}

double SplitMix64::normal() noexcept {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) noexcept {
  SplitMix64 g(parent ^ fnv1a64(stream));
  g.next();
  return g.next();
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  SplitMix64 g(parent + 0x632BE59BD9B4E019ULL * (index + 1));
  g.next();
  return g.next();
}

}  // namespace stripereid
