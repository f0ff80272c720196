#pragma once

#include <cstdint>
#include <random>

namespace srspin {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream addressed by (seed, stream, substream).
/// Every atom, shot and resample draws from its own stream so results do not
/// depend on evaluation order or thread count.
inline constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                                           std::uint64_t substream = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ (substream * 0xd1342543de82ef95ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
  return Engine(stream_seed(seed, stream, substream));
}

}  // namespace srspin
