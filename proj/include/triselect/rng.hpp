#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace triselect {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014). Used only to derive
/// statistically independent 64-bit seeds from (seed, stream) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over a string, for naming streams by label.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Splittable random streams: every (root seed, stream label, index) triple
/// maps to its own Mersenne Twister (mt19937_64) whose seed is derived with
/// SplitMix64. Consumers that draw from different streams never perturb
/// each other, so adding draws in one generator leaves the others unchanged.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t root) noexcept : root_(root) {}

  std::uint64_t root() const noexcept { return root_; }

  std::uint64_t derive(std::string_view label, std::uint64_t index = 0) const noexcept {
    return splitmix64(splitmix64(root_ ^ fnv1a64(label)) + splitmix64(index));
  }

  std::mt19937_64 stream(std::string_view label, std::uint64_t index = 0) const {
    return std::mt19937_64(derive(label, index));
  }

  RngStreams split(std::string_view label, std::uint64_t index = 0) const noexcept {
    return RngStreams(derive(label, index));
  }

 private:
  std::uint64_t root_;
};

}  // namespace triselect
