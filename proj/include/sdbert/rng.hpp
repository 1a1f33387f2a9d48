#ifndef SDBERT_RNG_HPP_
#define SDBERT_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace sdbert {

// splitmix64 finalizer; used to derive independent stream seeds from
// (base seed, index) pairs so e.g. every mask row gets its own engine.
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream));
}

// The distributions below are written out by hand instead of using
// std::*_distribution, whose output sequences are implementation-defined.
// mt19937_64 itself is fully specified, so these draws are reproducible
// across compilers and processes.

// Uniform double in [0, 1) with 53 bits of randomness.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [-scale, scale).
inline double uniform_symmetric(std::mt19937_64& rng, double scale) {
  return (2.0 * uniform_unit(rng) - 1.0) * scale;
}

// Uniform integer in [0, bound) via rejection sampling; bound >= 1.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

// In-place Fisher-Yates shuffle driven by uniform_below.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace sdbert

#endif  // SDBERT_RNG_HPP_
