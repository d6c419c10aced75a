#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gazetrace {

/// Dense row-major matrix of doubles. Channel data is stored one channel per
/// row, so `row(c)` is a contiguous view of a channel.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Matrix product; dimensions must agree (DataError otherwise).
Matrix operator*(const Matrix& a, const Matrix& b);

/// a * b^T.
Matrix multiply_abt(const Matrix& a, const Matrix& b);

std::vector<double> row_means(const Matrix& m);

/// Frobenius norm of (a - b).
double frobenius_distance(const Matrix& a, const Matrix& b);

}  // namespace gazetrace
