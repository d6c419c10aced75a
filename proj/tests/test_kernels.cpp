#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gazetrace/kernels.hpp"

using namespace gazetrace;
namespace k = gazetrace::kernels;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

}  // namespace

TEST_CASE("matmul matches the naive triple loop") {
  // Sizes straddle the column block so the blocked path is exercised.
  auto a = random_matrix(7, 13, 1);
  auto b = random_matrix(13, 600, 2);
  auto c = k::serial::matmul(a, b);
  REQUIRE(c.rows() == 7);
  REQUIRE(c.cols() == 600);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 600; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < 13; ++q) s += a(i, q) * b(q, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("matmul_abt matches a * transpose(b)") {
  auto a = random_matrix(5, 1031, 3);
  auto b = random_matrix(4, 1031, 4);
  auto c = k::serial::matmul_abt(a, b);
  auto ref = k::serial::matmul(a, b.transposed());
  for (std::size_t i = 0; i < c.data().size(); ++i) CHECK(c.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
}

TEST_CASE("serial and omp kernels are bitwise identical") {
  auto a = random_matrix(19, 40, 5);
  auto b = random_matrix(40, 2500, 6);
  CHECK(bitwise_equal(k::serial::matmul(a, b).data(), k::omp::matmul(a, b).data()));
  auto bt = random_matrix(10, 2500, 7);
  auto w = random_matrix(19, 2500, 8);
  CHECK(bitwise_equal(k::serial::matmul_abt(w, bt).data(), k::omp::matmul_abt(w, bt).data()));

  Matrix gs(bt.rows(), bt.cols()), go(bt.rows(), bt.cols());
  auto ms = k::serial::tanh_contrast(bt, gs);
  auto mo = k::omp::tanh_contrast(bt, go);
  CHECK(bitwise_equal(ms, mo));
  CHECK(bitwise_equal(gs.data(), go.data()));

  std::vector<double> x(a.data().begin(), a.data().end());
  std::vector<std::size_t> starts = {0, 10, 100, 500};
  std::vector<double> omegas = {0.1, 0.5, 1.3};
  CHECK(bitwise_equal(k::serial::goertzel_windows(x, starts, 64, omegas), k::omp::goertzel_windows(x, starts, 64, omegas)));
  CHECK(bitwise_equal(k::serial::window_energies(x, starts, 64), k::omp::window_energies(x, starts, 64)));

  k::BandBins bins = {{1, 2, 3}, {4, 5, 6, 7}, {20}};
  auto trace = b.row(3);
  CHECK(bitwise_equal(k::serial::band_powers(trace, 100, bins).data(), k::omp::band_powers(trace, 100, bins).data()));
}

TEST_CASE("tanh contrast values") {
  Matrix y = Matrix::from_rows({{0.0, 1.0, -2.0, 40.0, -800.0}});
  Matrix g(1, 5);
  auto m = k::serial::tanh_contrast(y, g);
  double expect = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(g(0, j) == doctest::Approx(std::tanh(y(0, j))).epsilon(1e-14));
    expect += 1.0 - std::tanh(y(0, j)) * std::tanh(y(0, j));
  }
  CHECK(m[0] == doctest::Approx(expect / 5.0).epsilon(1e-14));
}

TEST_CASE("goertzel windows and energies") {
  const std::size_t n = 1000;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * 10.0 * i / 100.0);
  std::vector<std::size_t> starts = {0, 300};
  const double omega = 2.0 * std::numbers::pi * 10.0 / 100.0;
  auto p = k::serial::goertzel_windows(x, starts, 100, std::vector<double>{omega});
  REQUIRE(p.size() == 2);
  // Whole-cycle sine of unit amplitude: |X| = N/2.
  CHECK(p[0] == doctest::Approx(2500.0).epsilon(1e-9));
  auto e = k::serial::window_energies(x, starts, 100);
  CHECK(e[0] == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(k::goertzel(std::span<const double>(x).subspan(0, 100), omega) == doctest::Approx(2500.0).epsilon(1e-9));
}

TEST_CASE("band powers follow Parseval for a bin-centred sine") {
  // 500-sample window at 500 Hz: bin k is k Hz. A sine of amplitude A has mean power A^2/2.
  const std::size_t n = 1500;
  std::vector<double> x(n);
  const double amp = 3.0;
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * 10.0 * i / 500.0 + 0.3);
  k::BandBins bins = {{8, 9, 10, 11, 12}, {1, 2, 3}};
  auto m = k::serial::band_powers(x, 500, bins);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 2);
  for (std::size_t w = 0; w < 3; ++w) {
    CHECK(m(w, 0) == doctest::Approx(amp * amp / 2.0).epsilon(1e-9));
    CHECK(std::abs(m(w, 1)) < 1e-12);
  }
  // A trailing partial window is dropped.
  CHECK(k::serial::band_powers(std::span<const double>(x).subspan(0, 1200), 500, bins).rows() == 2);
}
