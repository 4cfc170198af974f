#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mcgt {

/// Input failed a structural precondition (bad graph, shape mismatch,
/// malformed config). Maps to CLI exit status 2.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not deliver its contract (iteration cap hit,
/// divergence, singular system). Maps to CLI exit status 1.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using Rng = std::mt19937_64;

// Unbiased draw from [0, bound). Avoids std::uniform_int_distribution so
// results are pinned to the mt19937_64 stream, not the standard library.
inline std::uint64_t bounded_rand(Rng& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace detail
}  // namespace mcgt
