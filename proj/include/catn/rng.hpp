#pragma once

#include <cstdint>
#include <random>

#include "catn/types.hpp"

namespace catn {

using Rng = std::mt19937_64;

/// Named substreams. Every random draw in the simulator comes from a generator
/// seeded by derive_seed(master, stream, index...), so any quantity can be
/// regenerated from (master seed, stream, counters) alone.
enum class Stream : std::uint64_t {
  kTuFading = 1,
  kAuFading = 2,
  kLosState = 3,
  kTrajectory = 4,
  kTuAgent = 5,
  kBsAgent = 6,
  kBaseline = 7,
  kInit = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seed derivation: hashes (master, stream, a, b) through
/// chained splitmix64 rounds.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

/// Circularly-symmetric complex Gaussian with unit variance, CN(0, 1).
Complex complex_normal(Rng& rng);

CVec complex_normal_vector(Rng& rng, int size);

double uniform01(Rng& rng);

/// Real N(0, 1), toolchain-independent.
double standard_normal(Rng& rng);

/// Uniform integer in [0, n).
int uniform_index(Rng& rng, int n);

}  // namespace catn
