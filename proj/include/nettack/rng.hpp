#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace nettack {

// std::mt19937_64 has a fully specified output sequence; the standard
// distributions do not, so the helpers below draw directly from the engine to
// keep seeded runs identical across standard libraries.
using Rng = std::mt19937_64;

inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Ts>
std::uint64_t derive_seed(std::uint64_t base, Ts... parts) {
  std::uint64_t s = mix_seed(base);
  ((s = mix_seed(s ^ static_cast<std::uint64_t>(parts))), ...);
  return s;
}

// Uniform integer in [0, n), n > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n + 1) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % n;
}

// Uniform real in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace nettack
