#include "gazetrace/matrix.hpp"

#include <cmath>
#include <string>

#include "gazetrace/errors.hpp"
#include "gazetrace/kernels.hpp"

namespace gazetrace {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw DataError("from_rows: ragged rows");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DataError("matrix product: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  return kernels::omp::matmul(a, b);
}

Matrix multiply_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DataError("multiply_abt: inner dimensions differ");
  return kernels::omp::matmul_abt(a, b);
}

std::vector<double> row_means(const Matrix& m) {
  std::vector<double> means(m.rows(), 0.0);
  if (m.cols() == 0) return means;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v;
    means[r] = s / static_cast<double>(m.cols());
  }
  return means;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("frobenius_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace gazetrace
