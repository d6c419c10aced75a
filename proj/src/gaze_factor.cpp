#include "gazetrace/gaze_factor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gazetrace/eigen.hpp"
#include "gazetrace/errors.hpp"
#include "gazetrace/kernels.hpp"
#include "json_util.hpp"

namespace gazetrace {

using nlohmann::json;

namespace {

constexpr int kModelFormatVersion = 1;

kernels::BandBins band_bins(const FeatureConfig& cfg, double rate_hz) {
  const std::size_t n = cfg.window_len_samples;
  kernels::BandBins bins(cfg.bands.size());
  for (std::size_t b = 0; b < cfg.bands.size(); ++b)
    for (std::size_t k = 0; k <= n / 2; ++k)
      if (cfg.bands[b].contains(static_cast<double>(k) * rate_hz / static_cast<double>(n))) bins[b].push_back(k);
  return bins;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<std::string> FeatureConfig::validate(double rate_hz) const {
  std::vector<std::string> out;
  if (window_len_samples < 2) out.push_back("window_len_samples must be at least 2");
  if (mode == FeatureMode::BandPower) {
    if (bands.empty()) out.push_back("no frequency bands");
    for (std::size_t i = 0; i < bands.size(); ++i) {
      const auto& b = bands[i];
      if (!(b.lo_hz > 0.0) || !(b.hi_hz > b.lo_hz) || b.hi_hz > rate_hz / 2.0)
        out.push_back("band " + b.name + " must satisfy 0 < lo < hi <= Nyquist");
      if (i > 0 && b.lo_hz < bands[i - 1].hi_hz)
        out.push_back("band " + b.name + " overlaps or precedes band " + bands[i - 1].name);
    }
  }
  return out;
}

std::size_t FeatureConfig::feature_count() const {
  return mode == FeatureMode::BandPower ? bands.size() : window_len_samples;
}

std::string FeatureConfig::feature_name(std::size_t j) const {
  if (mode == FeatureMode::BandPower && j < bands.size()) return bands[j].name;
  return "sample " + std::to_string(j);
}

std::vector<double> concatenate_channels(const Recording& rec, const std::vector<std::string>& order) {
  std::vector<double> trace;
  trace.reserve(order.size() * rec.n_samples());
  for (const auto& label : order) {
    if (is_aux_label(label)) throw DataError("channel " + label + " is an aux channel, not EEG");
    const auto row = rec.data.row(rec.require_channel(label));
    trace.insert(trace.end(), row.begin(), row.end());
  }
  return trace;
}

Matrix extract_features(std::span<const double> trace, double rate_hz, const FeatureConfig& cfg) {
  if (auto v = cfg.validate(rate_hz); !v.empty()) throw DataError("invalid feature config: " + v.front());
  const std::size_t len = cfg.window_len_samples;
  if (trace.size() < len)
    throw DataError("trace of " + std::to_string(trace.size()) + " samples is shorter than one window (" +
                    std::to_string(len) + ")");
  if (cfg.mode == FeatureMode::BandPower) return kernels::omp::band_powers(trace, len, band_bins(cfg, rate_hz));
  const std::size_t rows = trace.size() / len;
  Matrix out(rows, len);
  std::copy(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(rows * len), out.data().begin());
  return out;
}

FactorModel fit_factor_model(const Matrix& features, const std::vector<GazeDirection>& labels,
                             const FeatureConfig& cfg, const FitOptions& opts) {
  const std::size_t n = features.rows();
  const std::size_t p = features.cols();
  if (labels.size() != n) throw DataError("label count does not match feature rows");
  if (p == 0) throw DataError("no features");
  if (n <= p) throw DataError("need more rows (" + std::to_string(n) + ") than features (" + std::to_string(p) + ")");
  std::map<GazeDirection, std::size_t> counts;
  for (auto d : labels) {
    if (d == GazeDirection::Unknown) throw DataError("training rows must not be labelled Unknown");
    ++counts[d];
  }
  for (const auto& [d, c] : counts)
    if (c < 2) throw DataError("direction " + std::string(to_string(d)) + " has fewer than 2 rows");

  FactorModel m;
  m.feature_config = cfg;
  m.means.assign(p, 0.0);
  m.stds.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) m.means[j] += features(i, j);
  for (double& v : m.means) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double d = features(i, j) - m.means[j];
      m.stds[j] += d * d;
    }
  for (std::size_t j = 0; j < p; ++j) {
    m.stds[j] = std::sqrt(m.stds[j] / static_cast<double>(n - 1));
    if (!(m.stds[j] > 0.0)) throw DataError("feature '" + cfg.feature_name(j) + "' has zero variance");
  }

  Matrix z(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) z(i, j) = (features(i, j) - m.means[j]) / m.stds[j];
  const Matrix zt = z.transposed();
  Matrix corr = kernels::omp::matmul_abt(zt, zt);
  for (double& v : corr.data()) v /= static_cast<double>(n - 1);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) corr(i, j) = corr(j, i) = 0.5 * (corr(i, j) + corr(j, i));
  const auto eig = eigen_symmetric(corr);
  m.eigenvalues = eig.values;

  if (opts.k) {
    if (*opts.k < 1 || *opts.k > p)
      throw DataError("retained component count must lie in [1, " + std::to_string(p) + "]");
    m.retained_k = *opts.k;
  } else {
    m.retained_k = static_cast<std::size_t>(std::count_if(eig.values.begin(), eig.values.end(), [](double v) { return v > 1.0; }));
    if (m.retained_k == 0) throw DataError("Kaiser criterion retains no components (no eigenvalue above 1)");
  }
  const std::size_t k = m.retained_k;
  m.score_weights = Matrix(p, k);
  for (std::size_t c = 0; c < k; ++c) {
    if (!(eig.values[c] > 0.0)) throw DataError("component " + std::to_string(c + 1) + " has a non-positive eigenvalue");
    const double s = 1.0 / std::sqrt(eig.values[c]);
    for (std::size_t j = 0; j < p; ++j) m.score_weights(j, c) = eig.vectors(j, c) * s;
  }

  const Matrix scores = kernels::omp::matmul(z, m.score_weights);
  for (const auto& [d, count] : counts) {
    std::vector<double> c(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == d)
        for (std::size_t j = 0; j < k; ++j) c[j] += scores(i, j);
    for (double& v : c) v /= static_cast<double>(count);
    m.centroids[d] = c;
  }

  if (opts.tau) {
    if (!(*opts.tau > 0.0)) throw DataError("rejection radius must be positive");
    m.reject_tau = *opts.tau;
  } else {
    double tau = 0.0;
    for (const auto& [d, count] : counts) {
      const auto& c = m.centroids[d];
      std::vector<double> dist;
      dist.reserve(count);
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != d) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += (scores(i, j) - c[j]) * (scores(i, j) - c[j]);
        dist.push_back(std::sqrt(s));
      }
      double mean = 0.0;
      for (double v : dist) mean += v;
      mean /= static_cast<double>(dist.size());
      double var = 0.0;
      for (double v : dist) var += (v - mean) * (v - mean);
      var /= static_cast<double>(dist.size() - 1);
      tau = std::max(tau, mean + 3.0 * std::sqrt(var));
    }
    m.reject_tau = tau > 0.0 ? tau : 1e-12;
  }
  return m;
}

Matrix component_scores(const FactorModel& model, const Matrix& features) {
  const std::size_t p = model.means.size();
  if (features.cols() != p)
    throw DataError("feature matrix has " + std::to_string(features.cols()) + " columns, model expects " +
                    std::to_string(p));
  Matrix z(features.rows(), p);
  for (std::size_t i = 0; i < features.rows(); ++i)
    for (std::size_t j = 0; j < p; ++j) z(i, j) = (features(i, j) - model.means[j]) / model.stds[j];
  return kernels::omp::matmul(z, model.score_weights);
}

ClassifyResult nearest_centroid(const std::map<GazeDirection, std::vector<double>>& centroids, double tau,
                                std::vector<double> mean_score) {
  if (centroids.empty()) throw DataError("model has no centroids");
  ClassifyResult r;
  r.mean_score = std::move(mean_score);
  r.min_distance = INFINITY;
  GazeDirection best = GazeDirection::Unknown;
  for (const auto& [d, c] : centroids) {
    if (c.size() != r.mean_score.size()) throw DataError("centroid dimension does not match score dimension");
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += (r.mean_score[j] - c[j]) * (r.mean_score[j] - c[j]);
    const double dist = std::sqrt(s);
    r.distances[d] = dist;
    if (dist < r.min_distance) {
      r.min_distance = dist;
      best = d;
    }
  }
  r.direction = r.min_distance <= tau ? best : GazeDirection::Unknown;
  return r;
}

ClassifyResult classify(const FactorModel& model, const Matrix& features) {
  if (features.rows() == 0) throw DataError("no feature rows to classify");
  const Matrix s = component_scores(model, features);
  std::vector<double> mean(s.cols(), 0.0);
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) mean[j] += s(i, j);
  for (double& v : mean) v /= static_cast<double>(s.rows());
  return nearest_centroid(model.centroids, model.reject_tau, std::move(mean));
}

Recording slice_recording(const Recording& rec, double t0_s, double t1_s) {
  const auto clamp = [&](double t) {
    const double i = std::llround(t * rec.sample_rate_hz);
    return static_cast<std::size_t>(std::clamp(i, 0.0, static_cast<double>(rec.n_samples())));
  };
  const std::size_t a = clamp(t0_s);
  const std::size_t b = std::max(a, clamp(t1_s));
  Recording out;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.channels = rec.channels;
  out.start_time_ns = rec.start_time_ns;
  out.data = Matrix(rec.n_channels(), b - a);
  for (std::size_t c = 0; c < rec.n_channels(); ++c) {
    const auto src = rec.data.row(c);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(a), src.begin() + static_cast<std::ptrdiff_t>(b),
              out.data.row(c).begin());
  }
  return out;
}

LabeledFeatures training_features(const Session& s, const FeatureConfig& cfg, const std::vector<std::string>& order) {
  std::vector<LabeledFeatures> parts;
  for (const auto& g : s.gaze) {
    if (g.direction == GazeDirection::Unknown) continue;
    const Recording seg = slice_recording(s.recording, g.t0_s, g.t1_s);
    const auto trace = concatenate_channels(seg, order);
    LabeledFeatures lf;
    lf.features = extract_features(trace, s.recording.sample_rate_hz, cfg);
    lf.labels.assign(lf.features.rows(), g.direction);
    parts.push_back(std::move(lf));
  }
  if (parts.empty()) throw DataError("session has no labelled gaze intervals with a trainable direction");
  return stack(parts);
}

LabeledFeatures stack(const std::vector<LabeledFeatures>& parts) {
  std::size_t rows = 0;
  std::size_t cols = parts.empty() ? 0 : parts.front().features.cols();
  for (const auto& p : parts) {
    if (p.features.cols() != cols) throw DataError("feature sets have different widths");
    rows += p.features.rows();
  }
  LabeledFeatures out;
  out.features = Matrix(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.features.data().begin(), p.features.data().end(),
              out.features.data().begin() + static_cast<std::ptrdiff_t>(at * cols));
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    at += p.features.rows();
  }
  return out;
}

json to_json(const FactorModel& m) {
  json bands = json::array();
  for (const auto& b : m.feature_config.bands) bands.push_back({{"name", b.name}, {"lo_hz", b.lo_hz}, {"hi_hz", b.hi_hz}});
  json centroids = json::object();
  for (const auto& [d, c] : m.centroids) centroids[std::string(to_string(d))] = c;
  std::vector<double> weights(m.score_weights.data().begin(), m.score_weights.data().end());
  return {
      {"format_version", kModelFormatVersion},
      {"feature_config",
       {{"window_len_samples", m.feature_config.window_len_samples},
        {"mode", m.feature_config.mode == FeatureMode::BandPower ? "BandPower" : "RawWindow"},
        {"bands_hz", bands}}},
      {"sample_rate_hz", m.sample_rate_hz},
      {"channel_order", m.channel_order},
      {"means", m.means},
      {"stds", m.stds},
      {"eigenvalues", m.eigenvalues},
      {"retained_k", m.retained_k},
      {"score_weights", weights},
      {"centroids", centroids},
      {"reject_tau", m.reject_tau},
  };
}

FactorModel factor_model_from_json(const json& j) {
  const std::string where = "model";
  if (detail::field<int>(j, "format_version", where) != kModelFormatVersion)
    throw DataError("unsupported model format_version");
  FactorModel m;
  const auto& fc = j.at("feature_config");
  m.feature_config.window_len_samples = detail::field<std::size_t>(fc, "window_len_samples", where);
  const auto mode = detail::field<std::string>(fc, "mode", where);
  if (mode == "BandPower") m.feature_config.mode = FeatureMode::BandPower;
  else if (mode == "RawWindow") m.feature_config.mode = FeatureMode::RawWindow;
  else throw DataError("unknown feature mode '" + mode + "'");
  m.feature_config.bands.clear();
  if (fc.contains("bands_hz"))
    for (const auto& b : fc["bands_hz"])
      m.feature_config.bands.push_back({detail::field<double>(b, "lo_hz", where), detail::field<double>(b, "hi_hz", where),
                                        b.value("name", std::string())});
  if (j.contains("sample_rate_hz")) m.sample_rate_hz = detail::field<double>(j, "sample_rate_hz", where);
  if (j.contains("channel_order")) m.channel_order = detail::field<std::vector<std::string>>(j, "channel_order", where);
  m.means = detail::field<std::vector<double>>(j, "means", where);
  m.stds = detail::field<std::vector<double>>(j, "stds", where);
  m.eigenvalues = detail::field<std::vector<double>>(j, "eigenvalues", where);
  m.retained_k = detail::field<std::size_t>(j, "retained_k", where);
  const auto w = detail::field<std::vector<double>>(j, "score_weights", where);
  const std::size_t p = m.means.size();
  if (m.stds.size() != p || w.size() != p * m.retained_k || m.retained_k == 0)
    throw DataError("model dimensions are inconsistent");
  m.score_weights = Matrix(p, m.retained_k);
  std::copy(w.begin(), w.end(), m.score_weights.data().begin());
  for (const auto& [name, c] : j.at("centroids").items()) {
    const auto d = parse_gaze_direction(name);
    if (!d) throw DataError("unknown centroid direction '" + name + "'");
    auto v = c.get<std::vector<double>>();
    if (v.size() != m.retained_k) throw DataError("centroid '" + name + "' has the wrong dimension");
    m.centroids[*d] = std::move(v);
  }
  m.reject_tau = detail::field<double>(j, "reject_tau", where);
  return m;
}

void save_model(const FactorModel& m, const std::filesystem::path& path) { detail::write_json_file(path, to_json(m)); }

FactorModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("model file not found: " + path.string());
  try {
    return factor_model_from_json(detail::read_json_file(path));
  } catch (const json::exception& e) {
    throw DataError("malformed model " + path.string() + ": " + e.what());
  }
}

json to_json(const ClassifyResult& r) {
  json dist = json::object();
  for (const auto& [d, v] : r.distances) dist[std::string(to_string(d))] = v;
  return {{"direction", to_string(r.direction)},
          {"mean_score", r.mean_score},
          {"distances", dist},
          {"min_distance", r.min_distance}};
}

const std::vector<BlindTestReference>& blind_test_reference() {
  static const std::vector<BlindTestReference> ref = {
      {1, 0.014, 0.682, "close to the bottom-right training direction"},
      {2, 0.475, -0.42, "far from all four training directions (subject looked at bottom)"},
  };
  return ref;
}

std::string eigenvalue_csv(const FactorModel& m, const std::string& subject) {
  std::ostringstream out;
  out << "index,eigenvalue,subject\n";
  for (std::size_t i = 0; i < m.eigenvalues.size(); ++i) out << i + 1 << ',' << fmt(m.eigenvalues[i]) << ',' << subject << '\n';
  return out.str();
}

std::string centroid_csv(const FactorModel& m) {
  std::ostringstream out;
  out << "direction";
  for (std::size_t j = 0; j < m.retained_k; ++j) out << ",score" << j + 1;
  out << '\n';
  for (const auto& [d, c] : m.centroids) {
    out << to_string(d);
    for (double v : c) out << ',' << fmt(v);
    out << '\n';
  }
  return out.str();
}

std::string reference_csv() {
  std::ostringstream out;
  out << "experiment,score1,score2,outcome\n";
  for (const auto& r : blind_test_reference())
    out << r.experiment << ',' << fmt(r.score1) << ',' << fmt(r.score2) << ",\"" << r.reported_outcome << "\"\n";
  return out.str();
}

}  // namespace gazetrace
