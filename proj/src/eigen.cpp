#include "gazetrace/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gazetrace/errors.hpp"

namespace gazetrace {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen eigen_symmetric(const Matrix& input, double tol, int max_sweeps) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw DataError("eigen_symmetric: matrix is not square");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-9 * (std::abs(input(i, j)) + std::abs(input(j, i)) + 1e-300))
        throw DataError("eigen_symmetric: matrix is not symmetric");

  Matrix a = input;
  Matrix v = Matrix::identity(n);
  double norm = 0.0;
  for (double x : a.data()) norm += x * x;
  norm = std::sqrt(norm);
  const double stop = tol * std::max(norm, 1e-300);

  int sweep = 0;
  for (; sweep < max_sweeps && off_diagonal_norm(a) > stop; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymmetricEigen out;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.values[j] = a(src, src);
    std::size_t big = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, src)) > std::abs(v(big, src))) big = k;
    const double sign = v(big, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
  }
  return out;
}

Matrix inverse_sqrt_symmetric(const Matrix& m) {
  const auto eig = eigen_symmetric(m);
  const std::size_t n = m.rows();
  for (double l : eig.values)
    if (!(l > 0.0)) throw DataError("inverse_sqrt_symmetric: matrix is not positive definite");
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += eig.vectors(i, k) * eig.vectors(j, k) / std::sqrt(eig.values[k]);
      out(i, j) = s;
    }
  return out;
}

}  // namespace gazetrace
