#pragma once

#include <cstdint>
#include <random>

namespace skinseg {

using Rng = std::mt19937_64;

/// Independent streams drawn from one user seed.
enum class SeedPurpose : std::uint64_t {
  initialization = 1,
  sampling = 2,
  shuffle = 3,
  training = 4,
  cv_split = 5,
  synthetic = 6,
};

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Sub-seed for (seed, purpose, index); stable across runs and thread counts.
constexpr std::uint64_t derive_seed(std::uint64_t seed, SeedPurpose purpose, std::uint64_t index = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  return detail::splitmix64(h ^ index);
}

inline Rng make_rng(std::uint64_t seed, SeedPurpose purpose, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, purpose, index));
}

}  // namespace skinseg
