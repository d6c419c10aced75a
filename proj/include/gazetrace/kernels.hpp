#pragma once

// Data-parallel inner loops. Every kernel exists twice with identical
// signatures: `serial` is the reference and `omp` spreads the outer loop over
// OpenMP threads. Each output element is computed by the same sequence of
// floating-point operations in both, so results are bitwise identical.

#include <cstddef>
#include <span>
#include <vector>

#include "gazetrace/matrix.hpp"

namespace gazetrace::kernels {

/// Goertzel recurrence at angular frequency `omega` (radians per sample).
/// Returns |sum_n x[n] exp(-i omega n)|^2.
double goertzel(std::span<const double> x, double omega);

/// Bins of a `window_len`-point DFT that fall in each band.
using BandBins = std::vector<std::vector<std::size_t>>;

#define GAZETRACE_KERNEL_DECLS                                                                      \
  Matrix matmul(const Matrix& a, const Matrix& b);                                                  \
  /* a * b^T */                                                                                     \
  Matrix matmul_abt(const Matrix& a, const Matrix& b);                                              \
  /* g = tanh(y) elementwise; returns the row means of 1 - g^2. */                                  \
  std::vector<double> tanh_contrast(const Matrix& y, Matrix& g);                                    \
  /* Goertzel power for every (window, omega) pair, laid out [window][omega]. */                    \
  std::vector<double> goertzel_windows(std::span<const double> x, std::span<const std::size_t> starts, \
                                       std::size_t len, std::span<const double> omegas);            \
  /* Sum of squares of each window. */                                                              \
  std::vector<double> window_energies(std::span<const double> x, std::span<const std::size_t> starts, \
                                      std::size_t len);                                             \
  /* One-sided periodogram power summed per band, one row per non-overlapping window. */            \
  Matrix band_powers(std::span<const double> trace, std::size_t window_len, const BandBins& bins);

namespace serial {
GAZETRACE_KERNEL_DECLS
}  // namespace serial

namespace omp {
GAZETRACE_KERNEL_DECLS
}  // namespace omp

#undef GAZETRACE_KERNEL_DECLS

}  // namespace gazetrace::kernels
