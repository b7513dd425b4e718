#pragma once

#include <cstdint>
#include <random>

namespace nmdr {

// splitmix64 step; used to derive independent sub-streams from one run seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream ids so unrelated draws never share a generator.
enum class Stream : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  DataLabels = 3,
  DataFeatures = 4,
  DataNoise = 5,
  DataParams = 6,
  EmInit = 7,
  Split = 8,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  return std::mt19937_64(mix_seed(seed ^ (static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL)));
}

}  // namespace nmdr
