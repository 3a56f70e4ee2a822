#include "catn/rng.hpp"

#include <algorithm>
#include <cmath>

namespace catn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a,
                          std::uint64_t b) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  return h;
}

// Box-Muller on top of the raw engine output; std::normal_distribution is
// implementation-defined and would make channel sequences toolchain-dependent.
Complex complex_normal(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-std::log(1.0 - u1));  // |z|^2 ~ Exp(1)
  const double theta = 2.0 * kPi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

CVec complex_normal_vector(Rng& rng, int size) {
  CVec v(size);
  for (int i = 0; i < size; ++i) v[i] = complex_normal(rng);
  return v;
}

double uniform01(Rng& rng) {
  // 53 random bits -> [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) { return std::sqrt(2.0) * complex_normal(rng).real(); }

int uniform_index(Rng& rng, int n) {
  return std::min(n - 1, static_cast<int>(uniform01(rng) * n));
}

}  // namespace catn
