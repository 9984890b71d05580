// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ugda {

/// Uniform in [0,1) from the top 53 bits of one draw; bit-exact everywhere,
/// unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

/// Uniform integer in [0,n) by multiply-shift; bias is negligible for the
/// dataset-scale n used here.
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(g()) * n) >> 64);
}

/// Standard normal via Box-Muller (two draws per call).
inline double gaussian(std::mt19937_64& g) {
  const double u1 = 1.0 - uniform01(g);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// splitmix64-style mixer for deriving independent streams from (seed, ...).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull + b + 0x2545F4914F6CDD1Dull;
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

/// In-place Fisher-Yates; one uniform_index draw per element.
template <typename T>
void shuffle_inplace(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(g, i)]);
}

/// FNV-1a over bytes; used to fold string ids into stream seeds.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace ugda
