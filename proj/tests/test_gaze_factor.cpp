#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gazetrace/errors.hpp"
#include "gazetrace/gaze_factor.hpp"
#include "gazetrace/synth.hpp"

using namespace gazetrace;

namespace {

// n rows of p = 6 variables driven by two planted unit-variance factors:
// factor 1 loads on columns 0-2, factor 2 on columns 3-5. The direction label
// shifts the factor means so classes are separable in score space.
struct Planted {
  Matrix x;
  std::vector<GazeDirection> labels;
};

Planted planted_two_factor(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Planted out{Matrix(n, 6), {}};
  const double shift[4][2] = {{-1.5, 1.5}, {1.5, 1.5}, {-1.5, -1.5}, {1.5, -1.5}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t d = i % 4;
    const double f1 = g(rng) + shift[d][0];
    const double f2 = g(rng) + shift[d][1];
    for (std::size_t j = 0; j < 3; ++j) out.x(i, j) = 5.0 + 0.9 * f1 + 0.3 * g(rng);
    for (std::size_t j = 3; j < 6; ++j) out.x(i, j) = 2.0 * (0.9 * f2 + 0.3 * g(rng));
    out.labels.push_back(kTrainableDirections[d]);
  }
  return out;
}

double column_mean(const Matrix& m, std::size_t c) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, c);
  return s / m.rows();
}

double column_var(const Matrix& m, std::size_t c) {
  const double mu = column_mean(m, c);
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += (m(i, c) - mu) * (m(i, c) - mu);
  return s / (m.rows() - 1);
}

}  // namespace

TEST_CASE("concatenate_channels") {
  Recording r;
  r.channels = {"Fp1", "Fp2"};
  r.data = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(concatenate_channels(r, {"Fp1", "Fp2"}) == std::vector<double>{1, 2, 3, 4});
  CHECK(concatenate_channels(r, {"Fp2", "Fp1"}) == std::vector<double>{3, 4, 1, 2});
  CHECK(concatenate_channels(r, {}).empty());
  CHECK_THROWS_AS(concatenate_channels(r, {"Cz"}), DataError);

  auto big = Recording::canonical(30000);
  CHECK(concatenate_channels(big, eeg_labels()).size() == 570000);
  CHECK_THROWS_AS(concatenate_channels(big, {"AUX1"}), DataError);
}

TEST_CASE("extract_features") {
  FeatureConfig cfg;
  std::vector<double> sine(5000);
  for (std::size_t t = 0; t < sine.size(); ++t) sine[t] = 10.0 * std::sin(2 * std::numbers::pi * 10.0 * t / 500.0);
  auto f = extract_features(sine, 500.0, cfg);
  REQUIRE(f.rows() == 10);
  REQUIRE(f.cols() == 5);
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t b : {0u, 1u, 3u, 4u}) CHECK(f(i, 2) >= 100.0 * f(i, b));

  auto z = extract_features(std::vector<double>(1000, 0.0), 500.0, cfg);
  for (double v : z.data()) CHECK(v == 0.0);

  CHECK(extract_features(std::vector<double>(1250, 1.0), 500.0, cfg).rows() == 2);
  CHECK_THROWS_AS(extract_features(std::vector<double>(499, 1.0), 500.0, cfg), DataError);

  FeatureConfig raw;
  raw.mode = FeatureMode::RawWindow;
  raw.window_len_samples = 4;
  auto rw = extract_features(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}, 500.0, raw);
  REQUIRE(rw.rows() == 2);
  CHECK(rw(1, 0) == 5.0);
  CHECK(raw.feature_count() == 4);

  FeatureConfig bad;
  bad.bands = {{8.0, 13.0, "a"}, {4.0, 8.0, "b"}};
  CHECK_FALSE(bad.validate(500.0).empty());
  bad.bands = {{8.0, 300.0, "a"}};
  CHECK_FALSE(bad.validate(500.0).empty());
}

TEST_CASE("perfectly correlated pair") {
  Matrix x(8, 2);
  std::vector<GazeDirection> labels;
  for (std::size_t i = 0; i < 8; ++i) {
    x(i, 0) = static_cast<double>(i * i % 5) + 0.1 * i;
    x(i, 1) = 3.0 * x(i, 0) - 1.0;
    labels.push_back(kTrainableDirections[i % 4]);
  }
  FeatureConfig cfg;
  auto m = fit_factor_model(x, labels, cfg);
  CHECK(m.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(m.eigenvalues[1]) <= 1e-12);
  CHECK(m.retained_k == 1);
}

TEST_CASE("fit preconditions") {
  auto p = planted_two_factor(40, 1);
  FeatureConfig cfg;
  auto labels = p.labels;
  labels[3] = GazeDirection::Unknown;
  CHECK_THROWS_AS(fit_factor_model(p.x, labels, cfg), DataError);

  auto x = p.x;
  for (std::size_t i = 0; i < x.rows(); ++i) x(i, 4) = 1.0;
  try {
    fit_factor_model(x, p.labels, cfg);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("gamma") != std::string::npos);
  }

  // One row of BottomRight only.
  Matrix few(9, 6);
  std::vector<GazeDirection> fl;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (auto& v : few.data()) v = g(rng);
  for (int i = 0; i < 8; ++i) fl.push_back(kTrainableDirections[i % 3]);
  fl.push_back(GazeDirection::BottomRight);
  CHECK_THROWS_AS(fit_factor_model(few, fl, cfg), DataError);
}

TEST_CASE("planted factors, standardized scores and centroid balance") {
  FeatureConfig cfg;
  for (unsigned seed : {5u, 6u, 7u}) {
    auto p = planted_two_factor(400, seed);
    auto m = fit_factor_model(p.x, p.labels, cfg);
    CHECK(m.retained_k == 2);
    double sum = 0.0;
    for (std::size_t i = 0; i < m.eigenvalues.size(); ++i) {
      sum += m.eigenvalues[i];
      CHECK(m.eigenvalues[i] >= -1e-9);
      if (i) CHECK(m.eigenvalues[i] <= m.eigenvalues[i - 1]);
    }
    CHECK(std::abs(sum - 6.0) <= 1e-6);

    auto s = component_scores(m, p.x);
    REQUIRE(s.cols() == 2);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(column_mean(s, c)) <= 1e-9);
      CHECK(std::abs(column_var(s, c) - 1.0) <= 1e-6);
    }
    // sum_d n_d c_d = 0
    std::vector<double> acc(2, 0.0);
    for (auto d : kTrainableDirections) {
      const double n_d = static_cast<double>(std::count(p.labels.begin(), p.labels.end(), d));
      for (std::size_t c = 0; c < 2; ++c) acc[c] += n_d * m.centroids.at(d)[c];
    }
    for (double v : acc) CHECK(std::abs(v) <= 1e-6);
    CHECK(m.reject_tau > 0.0);
  }
}

TEST_CASE("scores of the training means are zero and duplicated rows agree") {
  auto p = planted_two_factor(200, 9);
  auto m = fit_factor_model(p.x, p.labels);
  Matrix mean_row(3, 6);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 6; ++j) mean_row(i, j) = m.means[j];
  auto s = component_scores(m, mean_row);
  for (double v : s.data()) CHECK(std::abs(v) <= 1e-12);
  Matrix dup(4, 6);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) dup(i, j) = p.x(17, j);
  auto sd = component_scores(m, dup);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t c = 0; c < sd.cols(); ++c) CHECK(sd(i, c) == sd(0, c));
  CHECK_THROWS_AS(component_scores(m, Matrix(2, 5)), DataError);
  CHECK_THROWS_AS(classify(m, Matrix(0, 6)), DataError);
}

TEST_CASE("positive rescaling of features changes nothing that matters") {
  auto p = planted_two_factor(400, 13);
  auto m1 = fit_factor_model(p.x, p.labels);
  Matrix scaled = p.x;
  for (auto& v : scaled.data()) v *= 37.5;
  auto m2 = fit_factor_model(scaled, p.labels);
  CHECK(m1.retained_k == m2.retained_k);
  for (auto d : kTrainableDirections)
    for (std::size_t c = 0; c < m1.retained_k; ++c)
      CHECK(std::abs(std::abs(m1.centroids.at(d)[c]) - std::abs(m2.centroids.at(d)[c])) <= 1e-9);
  auto probe = planted_two_factor(40, 14);
  for (std::size_t i = 0; i < probe.x.rows(); ++i) {
    Matrix a(1, 6), b(1, 6);
    for (std::size_t j = 0; j < 6; ++j) a(0, j) = probe.x(i, j), b(0, j) = 37.5 * probe.x(i, j);
    CHECK(classify(m1, a).direction == classify(m2, b).direction);
  }
}

TEST_CASE("nearest_centroid examples") {
  std::map<GazeDirection, std::vector<double>> c = {{GazeDirection::TopRight, {1, 1}},
                                                     {GazeDirection::TopLeft, {-1, 1}},
                                                     {GazeDirection::BottomLeft, {-1, -1}},
                                                     {GazeDirection::BottomRight, {1, -1}}};
  auto r = nearest_centroid(c, 1.0, {0.9, 1.1});
  CHECK(r.direction == GazeDirection::TopRight);
  CHECK(r.min_distance == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(r.distances.size() == 4);
  CHECK(nearest_centroid(c, 1.0, {10, 10}).direction == GazeDirection::Unknown);
}

TEST_CASE("model json round trip and CSV tables") {
  auto p = planted_two_factor(200, 21);
  auto m = fit_factor_model(p.x, p.labels);
  m.channel_order = {"O1", "O2"};
  auto path = std::filesystem::temp_directory_path() / ("gazetrace_model_" + std::to_string(::getpid()) + ".json");
  save_model(m, path);
  auto back = load_model(path);
  CHECK(back.means == m.means);
  CHECK(back.stds == m.stds);
  CHECK(back.eigenvalues == m.eigenvalues);
  CHECK(back.retained_k == m.retained_k);
  CHECK(back.score_weights == m.score_weights);
  CHECK(back.centroids == m.centroids);
  CHECK(back.reject_tau == m.reject_tau);
  CHECK(back.channel_order == m.channel_order);
  CHECK(back.feature_config.bands == m.feature_config.bands);
  std::filesystem::remove(path);

  try {
    load_model(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
  }

  auto eig = eigenvalue_csv(m, "s3");
  CHECK(eig.rfind("index,eigenvalue,subject\n", 0) == 0);
  CHECK(std::count(eig.begin(), eig.end(), '\n') == 7);
  auto cen = centroid_csv(m);
  CHECK(cen.rfind("direction,score1,score2\n", 0) == 0);
  CHECK(std::count(cen.begin(), cen.end(), '\n') == 5);
}

TEST_CASE("blind-test reference values") {
  const auto& ref = blind_test_reference();
  REQUIRE(ref.size() == 2);
  CHECK(ref[0].score1 == 0.014);
  CHECK(ref[0].score2 == 0.682);
  CHECK(ref[1].score1 == 0.475);
  CHECK(ref[1].score2 == -0.42);
  CHECK(reference_csv().find("0.475") != std::string::npos);
}

TEST_CASE("synthetic held-out traces: trained direction found, novel signature rejected") {
  auto spec = SynthSpec::defaults();
  spec.seed = 31;
  for (auto& d : spec.directions) d.duration_s = 30.0;
  auto train = gen_session(spec);
  FeatureConfig cfg;
  auto feats = training_features(train.session, cfg, eeg_labels());
  auto model = fit_factor_model(feats.features, feats.labels, cfg);
  model.channel_order = eeg_labels();

  auto probe = [&](const std::string& label, std::uint64_t seed) {
    SynthSpec s = SynthSpec::defaults();
    s.seed = seed;
    s.directions = {{label, 20.0}};
    auto out = gen_session(s);
    auto trace = concatenate_channels(out.session.recording, eeg_labels());
    return classify(model, extract_features(trace, 500.0, cfg)).direction;
  };
  CHECK(probe("TopLeft", 101) == GazeDirection::TopLeft);
  CHECK(probe("BottomRight", 102) == GazeDirection::BottomRight);
  CHECK(probe("Bottom", 103) == GazeDirection::Unknown);
}
