// Iterative radix-2 FFT. Window lengths are restricted to powers of two by
// the STFT layer, so no mixed-radix support is needed.

#pragma once

#include "ctfmnmf/types.hpp"

#include <cstddef>

namespace ctfmnmf {

constexpr bool is_power_of_two(std::size_t n) {
  return n != 0 && (n & (n - 1)) == 0;
}

// In-place transform of a power-of-two-length buffer. The inverse includes
// the 1/N scaling so fft(fft(x), inverse=true) == x.
void fft_inplace(Complex* data, std::size_t n, bool inverse);

inline void fft_inplace(std::vector<Complex>& data, bool inverse) {
  fft_inplace(data.data(), data.size(), inverse);
}

}  // namespace ctfmnmf
