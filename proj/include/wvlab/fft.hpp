// fft.hpp
// Iterative radix-2 FFT, enough for grid-pointer momentum observables.
// Power-of-two lengths only; the grid oracle enforces that precondition.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "wvlab/core.hpp"

namespace wvlab {

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place decimation-in-time transform, A_k = sum_j a_j e^{-2 pi i jk/n}
// (inverse: e^{+2 pi i jk/n} without the 1/n factor; callers normalize).
inline void fft_radix2(std::vector<cx>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("fft_radix2: length must be a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
    const cx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cx u = a[i + k];
        const cx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace wvlab
