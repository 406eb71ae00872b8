#pragma once

#include <complex>

#include "specklenet/grid.hpp"

namespace specklenet::fft {

using Complex = std::complex<double>;

/// In-place 2D DFT, unnormalized, zero frequency at index (0, 0).
void forward(Grid2D<Complex>& g);
/// In-place inverse 2D DFT including the 1/(rows·cols) factor.
void inverse(Grid2D<Complex>& g);

/// Signed frequency index of DFT bin k for length n (k for k < n/2, k-n otherwise).
inline long signed_index(std::size_t k, std::size_t n) {
  return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

/// Swaps quadrants so the zero-frequency/zero-lag bin moves to (n/2, n/2).
template <typename T>
Grid2D<T> fftshift(const Grid2D<T>& g) {
  Grid2D<T> out(g.rows(), g.cols());
  const std::size_t hr = g.rows() / 2, hc = g.cols() / 2;
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c)
      out((r + hr) % g.rows(), (c + hc) % g.cols()) = g(r, c);
  return out;
}

}  // namespace specklenet::fft
