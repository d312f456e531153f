#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace curbsense {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a path of ids,
/// so that e.g. trajectory k's noise does not depend on generation order.
inline std::uint64_t stream_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept
{
  std::uint64_t s = splitmix64(root);
  for (auto p : path)
    s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path = {})
{
  return Rng(stream_seed(root, path));
}

inline double uniform01(Rng& rng)
{
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace curbsense
