#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qbv {

using Rng = std::mt19937_64;

/// Deterministic child seed from a base seed and a path of indices, e.g.
/// derive_seed(seed, {epoch, batch}). Uses splitmix64 mixing.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t p : path) h = mix(h ^ mix(p + 0x632BE59BD9B4E019ULL));
  return h;
}

}  // namespace qbv
