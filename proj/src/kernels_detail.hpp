#pragma once

// Per-element bodies shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "gazetrace/kernels.hpp"

namespace gazetrace::kernels::detail {

// Four interleaved partial sums, combined in a fixed order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

inline constexpr std::size_t kMatmulBlock = 512;

// Columns [j0, j0 + kMatmulBlock) of c = a * b. Each element accumulates over
// k in ascending order; the block of b stays cache resident across rows.
inline void matmul_block(const Matrix& a, const Matrix& b, Matrix& c, std::size_t j0) {
  const std::size_t j1 = std::min(c.cols(), j0 + kMatmulBlock);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* __restrict out = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* __restrict brow = b.row(k).data();
      for (std::size_t j = j0; j < j1; ++j) out[j] += aik * brow[j];
    }
  }
}

inline double tanh_row(const Matrix& y, Matrix& g, std::size_t r) {
  const auto in = y.row(r);
  auto out = g.row(r);
  double dsum = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    // tanh via one exp; saturates cleanly once exp overflows.
    const double e = std::exp(-2.0 * std::abs(in[j]));
    const double t = std::copysign((1.0 - e) / (1.0 + e), in[j]);
    out[j] = t;
    dsum += 1.0 - t * t;
  }
  return in.empty() ? 0.0 : dsum / static_cast<double>(in.size());
}

struct DftTables {
  std::vector<double> cos_t;
  std::vector<double> sin_t;
  explicit DftTables(std::size_t n) : cos_t(n), sin_t(n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      cos_t[i] = std::cos(ang);
      sin_t[i] = std::sin(ang);
    }
  }
};

inline void band_power_window(std::span<const double> w, const BandBins& bins, const DftTables& t,
                              std::span<double> out) {
  const std::size_t n = w.size();
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t b = 0; b < bins.size(); ++b) {
    double total = 0.0;
    for (std::size_t k : bins[b]) {
      double re = 0.0;
      double im = 0.0;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        re += w[i] * t.cos_t[idx];
        im -= w[i] * t.sin_t[idx];
        idx += k;
        if (idx >= n) idx -= n;
      }
      const bool edge = (k == 0) || (2 * k == n);
      total += (edge ? 1.0 : 2.0) * (re * re + im * im) * norm;
    }
    out[b] = total;
  }
}

}  // namespace gazetrace::kernels::detail
