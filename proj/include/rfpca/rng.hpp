#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace rfpca {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer applied to (master, stream): independent,
/// reproducible seeds for parallel streams such as replications.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class Container>
void shuffle(Container& values, Rng& rng) {
  std::shuffle(values.begin(), values.end(), rng);
}

}  // namespace rfpca
