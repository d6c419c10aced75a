#pragma once

// Ground-truth synthetic sessions.
//
// EEG is a set of band-limited sources (random-phase sums of sinusoids on the
// 1 Hz grid, two sources per band) mixed into the 19 electrodes. Each
// channel's mixing weights are normalised per band, so every channel carries
// the same power in every band and that power follows the active label's
// signature. Blinks are biphasic pulses loaded on Fp1/Fp2/F7/F8; white noise
// is added last.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gazetrace/matrix.hpp"
#include "gazetrace/session.hpp"
#include "json.hpp"

namespace gazetrace {

inline constexpr std::size_t kSignatureBands = 5;
using Signature = std::array<double, kSignatureBands>;

/// Microvolts corresponding to full scale on the aux channels.
inline constexpr double kAuxFullScaleUv = 1000.0;

struct SynthSegment {
  std::string label;  // a GazeDirection name or any other key of signature_map
  double duration_s = 0.0;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::vector<SynthSegment> directions;
  std::map<std::string, Signature> signature_map;
  double blink_rate_per_min = 15.0;
  double blink_amplitude_uv = 150.0;
  double noise_rms_uv = 10.0;
  double mixing_condition_max = 10.0;
  double band_rms_uv = 20.0;  // per-band RMS at signature weight 1
  double sample_rate_hz = kEegSampleRateHz;

  /// Four quadrants x 60 s, default signatures, seed 0.
  static SynthSpec defaults();
  /// The four quadrant signatures plus the untrained "Bottom" signature.
  static std::map<std::string, Signature> default_signatures();

  std::vector<std::string> validate() const;
};

nlohmann::json to_json(const SynthSpec& spec);
/// Missing fields take their defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct GroundTruth {
  Matrix clean;                       // [19 x n] EEG without blinks or noise
  Matrix noise;                       // [19 x n]
  std::vector<double> blink;          // blink waveform (uV) before loading
  std::vector<double> blink_column;   // [19] loading of the blink waveform
  std::vector<double> blink_times_s;
  std::vector<std::string> window_truth;  // label of each 1 s window
  Matrix eeg_mixing;                  // [19 x sources]
  double mixing_condition = 0.0;
};

struct SynthOutput {
  Session session;
  GroundTruth truth;
};

/// Deterministic in `spec.seed`. DataError when `spec` fails validate().
SynthOutput gen_session(const SynthSpec& spec);

struct BlinkTrain {
  std::vector<double> times_s;
  std::vector<double> waveform;  // template, peak 1
};

/// Blink onsets with mean rate `rate_hz` and at least 0.5 s separation,
/// plus the 300 ms biphasic template sampled at `sample_rate_hz`.
BlinkTrain gen_blink(double rate_hz, double duration_s, std::uint64_t seed, double sample_rate_hz = kEegSampleRateHz);

/// truth.json + clean.f32le in `dir`.
void save_truth(const GroundTruth& truth, const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace gazetrace
