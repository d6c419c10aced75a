#pragma once

// Sine-burst event markers and the two-pulse gaze code.
//
// Events are written into a sample stream as short ramped sine bursts, one
// frequency per event code, and recovered with sliding Goertzel detectors.
// Gaze directions are written into a 500 Hz aux channel as a pair of pulses:
// the first pulse's frequency selects left/right, the second pulse's length
// selects top/bottom.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gazetrace/session.hpp"
#include "json.hpp"

namespace gazetrace {

struct CodecConfig {
  double sample_rate_hz = 44100.0;
  std::map<int, double> codebook;  // code -> tone frequency (Hz)
  double burst_duration_s = 0.050;
  double amplitude = 0.8;  // fraction of full scale
  double ramp_s = 0.005;   // raised-cosine edge length
  double detect_window_s = 0.025;
  double detect_hop_s = 0.005;
  double power_threshold_ratio = 10.0;  // tone-bin power over broadband mean power
  double min_tone_fill = 0.8;           // share of window energy that must sit in the tone bin

  /// 44.1 kHz audio markers, codes 1..8 at 1000, 1250, ..., 2750 Hz.
  static CodecConfig audio_default();
  /// Event markers on the 500 Hz AUX1 channel, codes 1..8 at 30, 55, ..., 205 Hz.
  static CodecConfig aux_default();

  std::vector<std::string> validate() const;
  void check() const;  // DataError listing the first violation

  std::size_t window_samples() const;
  std::size_t burst_samples() const;
  /// Start sample of detection window `k`.
  std::size_t window_start(std::size_t k) const;
  /// Stable 64-bit FNV-1a digest of the canonical JSON form, as 16 hex digits.
  std::string digest() const;
};

nlohmann::json to_json(const CodecConfig& cfg);
CodecConfig codec_from_json(const nlohmann::json& j);
/// Codebook files are JSON objects {"<code>": frequency_hz}.
std::map<int, double> codebook_from_json(const nlohmann::json& j);

struct GazeCodeTable {
  double freq_left_hz = 40.0;
  double freq_right_hz = 80.0;
  double pulse1_duration_s = 0.100;
  double gap_s = 0.050;
  double freq_pulse2_hz = 120.0;
  double duration_top_s = 0.100;
  double duration_bottom_s = 0.200;
  double amplitude = 0.8;
  double ramp_s = 0.005;
  double pair_timeout_s = 1.0;

  std::vector<std::string> validate(double rate_hz) const;
  double encoded_duration_s(GazeDirection d) const;
};

struct DetectedEvent {
  int code = 0;
  double onset_s = 0.0;

  bool operator==(const DetectedEvent&) const = default;
};

struct GazeEvent {
  GazeDirection direction = GazeDirection::Unknown;
  double onset_s = 0.0;
};

struct GazeDecodeResult {
  std::vector<GazeEvent> events;
  std::vector<std::string> diagnostics;  // malformed or unpaired pulses
};

/// floor(burst_duration_s * rate) samples of amplitude * sin(2 pi f n / rate)
/// with raised-cosine ramps at both ends. Values are rounded to float32.
std::vector<double> encode_burst(double freq_hz, const CodecConfig& cfg);

/// `stream` with `burst` added from sample floor(onset_s * rate).
std::vector<double> inject(std::span<const double> stream, double rate_hz, double onset_s,
                           std::span<const double> burst);
/// In-place form of inject().
void inject_into(std::vector<double>& stream, double rate_hz, double onset_s, std::span<const double> burst);

/// |sum_n x[n] exp(-2 pi i f n / rate)|^2.
double goertzel_power(std::span<const double> window, double freq_hz, double rate_hz);

/// Batch detection over a whole stream, sorted by onset.
std::vector<DetectedEvent> detect_bursts(std::span<const double> stream, const CodecConfig& cfg);

/// The same detector fed in chunks. Emits each event as soon as the first
/// window of its run is complete.
class StreamingDetector {
 public:
  explicit StreamingDetector(CodecConfig cfg);

  void feed(std::span<const double> chunk);
  /// Events detected since the last poll, in onset order.
  std::vector<DetectedEvent> poll();
  /// Samples consumed so far.
  std::uint64_t samples_seen() const { return consumed_; }
  double stream_time_s() const { return static_cast<double>(consumed_) / cfg_.sample_rate_hz; }

 private:
  void evaluate_ready_windows();

  CodecConfig cfg_;
  std::vector<int> codes_;
  std::vector<double> omegas_;
  std::size_t window_len_;
  std::deque<double> buffer_;
  std::uint64_t buffer_origin_ = 0;  // absolute index of buffer_.front()
  std::uint64_t consumed_ = 0;
  std::size_t next_window_ = 0;
  std::vector<bool> in_run_;
  std::vector<DetectedEvent> pending_;
  std::vector<double> scratch_;
};

/// Two-pulse code for `direction` (full-scale units). DataError for Unknown.
std::vector<double> encode_gaze(GazeDirection direction, const GazeCodeTable& table, double rate_hz);

/// Decodes every pulse pair in an aux channel.
GazeDecodeResult decode_gaze(std::span<const double> aux, const GazeCodeTable& table, double rate_hz);

/// Headerless float32 stream plus its JSON sidecar {sample_rate_hz, n_samples}.
struct SampleStream {
  double sample_rate_hz = 44100.0;
  std::vector<double> samples;
};
void save_stream(const std::filesystem::path& f32le_path, const SampleStream& s);
SampleStream load_stream(const std::filesystem::path& f32le_path);
std::filesystem::path sidecar_path(const std::filesystem::path& f32le_path);

}  // namespace gazetrace
