#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gazetrace/eigen.hpp"

using namespace gazetrace;

namespace {

Matrix random_correlation(std::size_t p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const std::size_t n = 200;
  Matrix x(n, p);
  for (auto& v : x.data()) v = g(rng);
  // Mix columns so the matrix is not near-diagonal.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 1; j < p; ++j) x(i, j) += 0.6 * x(i, j - 1);
  Matrix c(p, p);
  std::vector<double> mean(p, 0.0), sd(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) mean[j] += x(i, j);
    mean[j] /= n;
    for (std::size_t i = 0; i < n; ++i) sd[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
    sd[j] = std::sqrt(sd[j] / (n - 1));
  }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
      c(a, b) = s / (n - 1) / (sd[a] * sd[b]);
    }
  return c;
}

// det(A - lambda I) by Gaussian elimination with partial pivoting.
double char_poly(const Matrix& a, double lambda) {
  const std::size_t p = a.rows();
  std::vector<double> m(p * p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) m[i * p + j] = a(i, j) - (i == j ? lambda : 0.0);
  double det = 1.0;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(m[r * p + c]) > std::abs(m[piv * p + c])) piv = r;
    if (m[piv * p + c] == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t j = 0; j < p; ++j) std::swap(m[c * p + j], m[piv * p + j]);
      det = -det;
    }
    det *= m[c * p + c];
    for (std::size_t r = c + 1; r < p; ++r) {
      const double f = m[r * p + c] / m[c * p + c];
      for (std::size_t j = c; j < p; ++j) m[r * p + j] -= f * m[c * p + j];
    }
  }
  return det;
}

// Roots of the characteristic polynomial in [lo, hi], found by scanning for
// sign changes and bisecting. Good enough for well-separated eigenvalues.
std::vector<double> char_poly_roots(const Matrix& a, double lo, double hi) {
  std::vector<double> roots;
  const int steps = 20000;
  double x0 = lo, f0 = char_poly(a, lo);
  for (int i = 1; i <= steps; ++i) {
    const double x1 = lo + (hi - lo) * i / steps;
    const double f1 = char_poly(a, x1);
    if (f0 == 0.0) roots.push_back(x0);
    else if (f0 * f1 < 0.0) {
      double l = x0, r = x1, fl = f0;
      for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (l + r);
        const double fm = char_poly(a, m);
        if (fl * fm <= 0.0) r = m;
        else l = m, fl = fm;
      }
      roots.push_back(0.5 * (l + r));
    }
    x0 = x1;
    f0 = f1;
  }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

// Power iteration with Hotelling deflation.
std::vector<double> deflation_eigenvalues(Matrix a) {
  const std::size_t p = a.rows();
  std::vector<double> out;
  // Shift keeps the operator positive definite so the dominant eigenvalue is the largest.
  const double shift = 1.0;
  for (std::size_t i = 0; i < p; ++i) a(i, i) += shift;
  for (std::size_t k = 0; k < p; ++k) {
    std::vector<double> v(p, 1.0), w(p);
    v[k % p] += 0.5;
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      for (std::size_t i = 0; i < p; ++i) {
        w[i] = 0.0;
        for (std::size_t j = 0; j < p; ++j) w[i] += a(i, j) * v[j];
      }
      double nrm = 0.0;
      for (double x : w) nrm += x * x;
      nrm = std::sqrt(nrm);
      for (std::size_t i = 0; i < p; ++i) w[i] /= nrm;
      double diff = 0.0;
      for (std::size_t i = 0; i < p; ++i) diff = std::max(diff, std::abs(w[i] - v[i]));
      v = w;
      lambda = nrm;
      if (diff < 1e-15) break;
    }
    out.push_back(lambda - shift);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) a(i, j) -= lambda * v[i] * v[j];
  }
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace

TEST_CASE("2x2 closed form") {
  auto e = eigen_symmetric(Matrix::from_rows({{2.0, 1.0}, {1.0, 2.0}}));
  REQUIRE(e.values.size() == 2);
  CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(e.vectors(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("perfectly correlated pair gives {2, 0}") {
  auto e = eigen_symmetric(Matrix::from_rows({{1.0, 1.0}, {1.0, 1.0}}));
  CHECK(e.values[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(e.values[1]) < 1e-14);
}

TEST_CASE("characteristic polynomial oracle for p <= 4") {
  for (std::size_t p = 2; p <= 4; ++p) {
    auto r = random_correlation(p, 40 + static_cast<unsigned>(p));
    auto e = eigen_symmetric(r);
    auto roots = char_poly_roots(r, -0.5, static_cast<double>(p) + 0.5);
    REQUIRE(roots.size() == p);
    for (std::size_t i = 0; i < p; ++i) CHECK(std::abs(e.values[i] - roots[i]) <= 1e-8);
  }
}

TEST_CASE("deflation oracle for larger p and decomposition identities") {
  for (std::size_t p : {5u, 8u, 12u}) {
    auto r = random_correlation(p, 5 + static_cast<unsigned>(p));
    auto e = eigen_symmetric(r);
    auto ref = deflation_eigenvalues(r);
    double sum = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      CHECK(std::abs(e.values[i] - ref[i]) <= 1e-8);
      sum += e.values[i];
      if (i > 0) CHECK(e.values[i] <= e.values[i - 1]);
      CHECK(e.values[i] >= -1e-9);
    }
    CHECK(std::abs(sum - static_cast<double>(p)) <= 1e-6);
    // A V = V diag(values) and V orthonormal.
    for (std::size_t j = 0; j < p; ++j) {
      double big = 0.0;
      for (std::size_t i = 0; i < p; ++i) {
        double av = 0.0;
        for (std::size_t q = 0; q < p; ++q) av += r(i, q) * e.vectors(q, j);
        CHECK(std::abs(av - e.values[j] * e.vectors(i, j)) <= 1e-10);
        if (std::abs(e.vectors(i, j)) > std::abs(big)) big = e.vectors(i, j);
      }
      CHECK(big > 0.0);
      for (std::size_t k = 0; k < p; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < p; ++i) d += e.vectors(i, j) * e.vectors(i, k);
        CHECK(std::abs(d - (j == k ? 1.0 : 0.0)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("inverse square root") {
  auto m = Matrix::from_rows({{4.0, 1.0, 0.0}, {1.0, 3.0, 0.5}, {0.0, 0.5, 2.0}});
  auto s = inverse_sqrt_symmetric(m);
  // s * m * s = I
  auto prod = s * m * s;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-12);
}
