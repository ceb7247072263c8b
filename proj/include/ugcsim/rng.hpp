#pragma once

#include <cstdint>
#include <random>

namespace ugcsim {

// Standard library distributions are implementation-defined, so every draw
// that feeds a serialized artifact goes through these helpers instead.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based draw keyed by (seed, step, agent). Pure function of the key.
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t step,
                                     std::uint64_t agent) noexcept {
  std::uint64_t h = splitmix64(seed ^ 0x5ca1ab1e00000000ULL);
  h = splitmix64(h ^ (step * 0xd1b54a32d192ed03ULL));
  h = splitmix64(h ^ (agent * 0x8cb92ba72f3d8dd7ULL));
  return h;
}

/// Maps 64 random bits onto [0, 1) with 53 bits of precision.
constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

using Engine = std::mt19937_64;

inline double uniform_real(Engine& engine) { return unit_interval(engine()); }

/// Unbiased integer in [0, bound) by rejection.
inline std::uint64_t uniform_index(Engine& engine, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return x % bound;
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  return Engine(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace ugcsim
