#pragma once

// Band-pass filtering and ICA-based artifact removal.
//
// The decomposition models centered channel data as mixing * sources:
// sources are the independent components (one row each) and mixing holds
// each component's contribution to every channel.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gazetrace/matrix.hpp"
#include "gazetrace/session.hpp"
#include "json.hpp"

namespace gazetrace {

/// Zero-phase band-pass (2nd-order Butterworth high-pass at `lo_hz` cascaded
/// with a 2nd-order Butterworth low-pass at `hi_hz`, each run forward and
/// backward) over every non-AUX channel. AUX rows are copied unchanged.
Recording bandpass(const Recording& rec, double lo_hz = 0.15, double hi_hz = 100.0);

/// Forward-backward filtering of one channel by a single biquad section.
enum class BiquadKind { Lowpass, Highpass };
std::vector<double> filtfilt_butter2(std::span<const double> x, BiquadKind kind, double cutoff_hz, double rate_hz);

struct Whitened {
  Matrix z;          // [k x n], zero mean, identity covariance
  Matrix whitening;  // [k x c]
  std::vector<double> means;
  std::vector<double> eigenvalues;  // covariance spectrum, descending
  Matrix eigenvectors;              // [c x c]
};

/// Whitens the rows of `x` (covariance with 1/n normalization). With k < c
/// only the k leading principal directions are kept. DataError names the
/// offending channels (by label when `labels` is given) when a row is
/// constant or the covariance is rank deficient.
Whitened whiten(const Matrix& x, std::size_t k = 0, const std::vector<std::string>& labels = {});

struct IcaConfig {
  int max_iter = 200;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  bool sort_by_mixing_norm = true;
};

struct IcaDecomposition {
  Matrix sources;    // [k x n]
  Matrix mixing;     // [c x k]
  Matrix unmixing;   // [k x c]
  Matrix whitening;  // [k x c]
  std::vector<double> channel_means;
  std::vector<std::string> channel_labels;
  bool converged = false;
  int iterations = 0;
};

/// Symmetric FastICA with the tanh contrast. Component signs are fixed so
/// that each mixing column's largest-magnitude entry is positive.
IcaDecomposition fastica(const Matrix& x, std::size_t k, const IcaConfig& cfg = {},
                         std::vector<std::string> labels = {});

struct ScoreConfig {
  double lowfreq_hz = 4.0;
  std::vector<std::string> frontal = {"Fp1", "Fp2", "F7", "F8"};
};

struct ComponentScore {
  std::size_t component_index = 0;
  double lowfreq_fraction = 0.0;
  double frontal_fraction = 0.0;
  double amplitude_ratio = 0.0;
  double combined = 0.0;
};

std::vector<ComponentScore> score_components(const IcaDecomposition& dec, double rate_hz,
                                             const ScoreConfig& cfg = {});

/// One-sided periodogram of a real signal, bins k * rate / n for k = 0..n/2.
std::vector<double> periodogram(std::span<const double> x);

/// mixing (flagged columns zeroed) * sources + channel means.
Matrix reconstruct(const IcaDecomposition& dec, const std::set<std::size_t>& flagged);
/// As reconstruct(), labelled with the decomposition's channels.
Recording remove_and_reconstruct(const IcaDecomposition& dec, const std::set<std::size_t>& flagged,
                                 double rate_hz = kEegSampleRateHz);

struct CleanConfig {
  bool apply_bandpass = false;
  double lo_hz = 0.15;
  double hi_hz = 100.0;
  double flag_threshold = 0.6;
  std::optional<std::set<std::size_t>> flags;  // overrides scoring
  std::optional<std::size_t> k;                // default: all EEG channels
  IcaConfig ica;
  ScoreConfig score;
};

struct CleanResult {
  Recording cleaned;  // same layout as the input, AUX rows untouched
  IcaDecomposition decomposition;
  std::vector<ComponentScore> scores;
  std::set<std::size_t> flagged;
};

CleanResult clean_recording(const Recording& rec, const CleanConfig& cfg = {});

nlohmann::json clean_report(const CleanResult& r, const CleanConfig& cfg);

}  // namespace gazetrace
