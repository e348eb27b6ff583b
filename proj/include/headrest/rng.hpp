#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace headrest {

/// Name recorded in experiment headers for the noise generator in use.
inline constexpr std::string_view kRngDescription = "mt19937_64 seeded by splitmix64(seed, stream)";

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent deterministic engine per (seed, stream) pair, so results do
/// not depend on the order in which streams are drawn.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

}  // namespace headrest
