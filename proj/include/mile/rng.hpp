#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace mile {

// std::mt19937_64 is fully specified by the standard, so streams are portable.
// The distributions below are hand-rolled because the std:: distributions are
// implementation-defined and would break cross-platform reproducibility.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent seed for stream `stream` derived from `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x51ed270b7a54c9a1ULL));
}

/// Uniform in [0, 1) with 53-bit resolution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Unbiased integer in [0, n) via rejection.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

inline void standard_normal_pair(Rng& rng, double& a, double& b) {
  constexpr double kTwoPi = 6.283185307179586477;
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  a = r * std::cos(kTwoPi * u2);
  b = r * std::sin(kTwoPi * u2);
}

inline double standard_normal(Rng& rng) {
  double a, b;
  standard_normal_pair(rng, a, b);
  return a;
}

inline void fill_standard_normal(Rng& rng, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 1 < out.size(); i += 2) standard_normal_pair(rng, out[i], out[i + 1]);
  if (i < out.size()) out[i] = standard_normal(rng);
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(Rng& rng, std::vector<T>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace mile
