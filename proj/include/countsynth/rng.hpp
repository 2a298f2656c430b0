#pragma once

// Seed derivation. Every independent stream (chain, replicate, simulated
// study) gets its own std::mt19937_64 seeded with
//   splitmix64(splitmix64(root) ^ (stream + 1) · 0x9E3779B97F4A7C15),
// so results never depend on scheduling order.

#include <cstdint>
#include <random>

namespace countsynth {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL));
}

inline Rng make_rng(std::uint64_t root, std::uint64_t stream) {
  return Rng(derive_seed(root, stream));
}

}  // namespace countsynth
