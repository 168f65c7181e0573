#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace entmlm {

using Rng = std::mt19937_64;

/// Derives a stable seed for a named sub-stream ("corpus", "shuffle", "mask",
/// "init", ...) so that each component's randomness is independent of the others.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

/// Uniform integer in [lo, hi].
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace entmlm
