#pragma once

#include <cstdint>
#include <random>

namespace kiloland {

// std::mt19937_64's output sequence is fixed by the standard, the standard
// distributions are not; draw doubles from raw bits so results are portable.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform01(engine);
}

/// SplitMix64 finalizer: counter-based hashing for random-access generators.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ mix64(v));
}

inline double hash_uniform01(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace kiloland
