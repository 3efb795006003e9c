#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace bsdqn {

// All randomness flows through explicitly seeded mt19937_64 streams. The
// std::random distributions are implementation-defined, so the mappings
// below are written out by hand to keep runs reproducible across toolchains.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream `stream` derived from one master seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(splitmix64(seed ^ (0xa0761d6478bd642fULL * (stream + 1))));
}

// Uniform double in [0, 1), 53-bit resolution, exactly one engine draw.
inline double uniform01(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform integer in [lo, hi], rejection sampled.
inline int uniform_int(Rng& g, int lo, int hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % span;
  std::uint64_t r = g();
  while (r >= limit) r = g();
  return lo + static_cast<int>(r % span);
}

}  // namespace bsdqn
