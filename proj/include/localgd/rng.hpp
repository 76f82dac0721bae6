#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>

namespace localgd {

/// Seeded stream built on std::mt19937_64 (MT19937-64, Matsumoto-Nishimura).
///
/// The engine's raw 64-bit output sequence is fixed by the C++ standard, so every
/// derived draw below is defined directly on raw words rather than through
/// std::*_distribution, whose algorithms vary between standard libraries.
///
///   uniform01()  : (word >> 11) * 2^-53, in [0, 1)
///   index(n)     : rejection sampling of word % n below the largest multiple of n
///   normal()     : Box-Muller on two uniform01 draws, cosine branch only
///
/// Each draw consumes whole words in call order; nothing is cached between calls.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = index(i);
      std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace localgd
