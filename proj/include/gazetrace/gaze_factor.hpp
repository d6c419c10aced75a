#pragma once

// Gaze-direction model: channels are joined end to end into one trace, cut
// into windows, summarised as band powers, and reduced by principal
// components of the feature correlation matrix. Directions are represented
// by the mean component score of their training windows.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazetrace/bands.hpp"
#include "gazetrace/matrix.hpp"
#include "gazetrace/session.hpp"
#include "json.hpp"

namespace gazetrace {

enum class FeatureMode { BandPower, RawWindow };

struct FeatureConfig {
  std::size_t window_len_samples = 500;
  FeatureMode mode = FeatureMode::BandPower;
  std::vector<Band> bands = default_bands();

  std::vector<std::string> validate(double rate_hz) const;
  /// Feature count per window.
  std::size_t feature_count() const;
  /// Human-readable name of feature j.
  std::string feature_name(std::size_t j) const;
};

/// Rows named in `order`, joined end to end. DataError for a missing or AUX label.
std::vector<double> concatenate_channels(const Recording& rec, const std::vector<std::string>& order);

/// One row per non-overlapping window; a trailing partial window is dropped.
Matrix extract_features(std::span<const double> trace, double rate_hz, const FeatureConfig& cfg);

struct FitOptions {
  std::optional<std::size_t> k;  // overrides the Kaiser count
  std::optional<double> tau;     // overrides the rejection radius
};

struct FactorModel {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> eigenvalues;  // descending
  std::size_t retained_k = 0;
  Matrix score_weights;  // [p x k]
  std::map<GazeDirection, std::vector<double>> centroids;
  double reject_tau = 0.0;
  FeatureConfig feature_config;
  double sample_rate_hz = kEegSampleRateHz;
  std::vector<std::string> channel_order;
};

FactorModel fit_factor_model(const Matrix& features, const std::vector<GazeDirection>& labels,
                             const FeatureConfig& cfg = {}, const FitOptions& opts = {});

/// Standardised features times the score weights, using training statistics.
Matrix component_scores(const FactorModel& model, const Matrix& features);

struct ClassifyResult {
  GazeDirection direction = GazeDirection::Unknown;
  std::vector<double> mean_score;
  std::map<GazeDirection, double> distances;
  double min_distance = 0.0;
};

/// Nearest centroid to `mean_score`, or Unknown beyond `tau`.
ClassifyResult nearest_centroid(const std::map<GazeDirection, std::vector<double>>& centroids, double tau,
                                std::vector<double> mean_score);

ClassifyResult classify(const FactorModel& model, const Matrix& features);

/// Features and labels for each labelled interval of a session.
struct LabeledFeatures {
  Matrix features;
  std::vector<GazeDirection> labels;
};

/// Samples of the interval [t0, t1) as a recording restricted to `order`.
Recording slice_recording(const Recording& rec, double t0_s, double t1_s);

/// Features of every gaze interval whose direction is trainable.
LabeledFeatures training_features(const Session& s, const FeatureConfig& cfg, const std::vector<std::string>& order);

/// Concatenates several labelled feature sets row-wise.
LabeledFeatures stack(const std::vector<LabeledFeatures>& parts);

nlohmann::json to_json(const FactorModel& m);
FactorModel factor_model_from_json(const nlohmann::json& j);
void save_model(const FactorModel& m, const std::filesystem::path& path);
FactorModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const ClassifyResult& r);

/// Published blind-test component scores, kept as reference values.
struct BlindTestReference {
  int experiment;
  double score1;
  double score2;
  std::string reported_outcome;
};
const std::vector<BlindTestReference>& blind_test_reference();

/// CSV tables: "index,eigenvalue,subject" and "direction,score1,score2,...".
std::string eigenvalue_csv(const FactorModel& m, const std::string& subject);
std::string centroid_csv(const FactorModel& m);
std::string reference_csv();

}  // namespace gazetrace
