#include "gazetrace/kernels.hpp"


#include "kernels_detail.hpp"
#include "gazetrace/errors.hpp"

namespace gazetrace::kernels::omp {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DataError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const auto blocks = static_cast<std::ptrdiff_t>((b.cols() + detail::kMatmulBlock - 1) / detail::kMatmulBlock);
  #pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jb = 0; jb < blocks; ++jb)
    detail::matmul_block(a, b, c, static_cast<std::size_t>(jb) * detail::kMatmulBlock);
  return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DataError("matmul_abt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  const auto total = static_cast<std::ptrdiff_t>(a.rows() * b.rows());
  const std::size_t nb = b.rows();
  #pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx) / nb;
    const std::size_t j = static_cast<std::size_t>(idx) % nb;
    c(i, j) = detail::dot(a.row(i).data(), b.row(j).data(), a.cols());
  }
  return c;
}

std::vector<double> tanh_contrast(const Matrix& y, Matrix& g) {
  if (g.rows() != y.rows() || g.cols() != y.cols()) g = Matrix(y.rows(), y.cols());
  std::vector<double> dmean(y.rows());
  const auto rows = static_cast<std::ptrdiff_t>(y.rows());
  #pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r)
    dmean[static_cast<std::size_t>(r)] = detail::tanh_row(y, g, static_cast<std::size_t>(r));
  return dmean;
}

std::vector<double> goertzel_windows(std::span<const double> x, std::span<const std::size_t> starts,
                                     std::size_t len, std::span<const double> omegas) {
  std::vector<double> out(starts.size() * omegas.size());
  const auto nw = static_cast<std::ptrdiff_t>(starts.size());
  #pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < nw; ++w) {
    const auto win = x.subspan(starts[static_cast<std::size_t>(w)], len);
    for (std::size_t f = 0; f < omegas.size(); ++f)
      out[static_cast<std::size_t>(w) * omegas.size() + f] = goertzel(win, omegas[f]);
  }
  return out;
}

std::vector<double> window_energies(std::span<const double> x, std::span<const std::size_t> starts,
                                    std::size_t len) {
  std::vector<double> out(starts.size());
  const auto nw = static_cast<std::ptrdiff_t>(starts.size());
  #pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < nw; ++w) {
    const double* p = x.data() + starts[static_cast<std::size_t>(w)];
    out[static_cast<std::size_t>(w)] = detail::dot(p, p, len);
  }
  return out;
}

Matrix band_powers(std::span<const double> trace, std::size_t window_len, const BandBins& bins) {
  if (window_len == 0) throw DataError("band_powers: zero window length");
  const std::size_t nw = trace.size() / window_len;
  Matrix out(nw, bins.size());
  if (nw == 0) return out;
  const detail::DftTables tables(window_len);
  const auto n = static_cast<std::ptrdiff_t>(nw);
  #pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < n; ++w) {
    const auto i = static_cast<std::size_t>(w);
    detail::band_power_window(trace.subspan(i * window_len, window_len), bins, tables, out.row(i));
  }
  return out;
}

}  // namespace gazetrace::kernels::omp
