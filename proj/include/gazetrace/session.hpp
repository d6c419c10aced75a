#pragma once

// Recordings, event markers, gaze labels and the on-disk session directory.
//
// Session directory layout:
//   manifest.json  {format_version, sample_rate_hz, channels, n_samples,
//                   data_encoding, subject, start_time_ns, codec_digest}
//   data.f32le     channel-major little-endian float32, no header
//   data.csv       (csv mode) header row of labels, one row per sample
//   events.json    [{code, onset_s, source, raw_receive_time_ns?}]
//   gaze.json      [{t0_s, t1_s, direction}]

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gazetrace/matrix.hpp"

namespace gazetrace {

inline constexpr double kEegSampleRateHz = 500.0;
inline constexpr double kAmplitudeBoundUv = 12000.0;
inline constexpr int kSessionFormatVersion = 1;

/// The 19 EEG electrodes of the 10-20 subset, in storage order.
const std::vector<std::string>& eeg_labels();
/// eeg_labels() followed by AUX1 and AUX2.
const std::vector<std::string>& canonical_labels();
inline const std::string kAux1 = "AUX1";
inline const std::string kAux2 = "AUX2";
bool is_aux_label(std::string_view label);

struct Recording {
  double sample_rate_hz = kEegSampleRateHz;
  std::vector<std::string> channels;
  Matrix data;  // [channels x samples], microvolts
  std::int64_t start_time_ns = 0;

  /// Zero-filled recording with the canonical 21-channel layout.
  static Recording canonical(std::size_t n_samples, double rate_hz = kEegSampleRateHz);

  std::size_t n_channels() const { return channels.size(); }
  std::size_t n_samples() const { return data.cols(); }
  double duration_s() const { return static_cast<double>(n_samples()) / sample_rate_hz; }
  /// Row index of `label`, or nullopt.
  std::optional<std::size_t> channel_index(std::string_view label) const;
  /// Row index of `label`; DataError when absent.
  std::size_t require_channel(std::string_view label) const;
  /// Labels of non-AUX channels in storage order.
  std::vector<std::string> eeg_channels() const;
};

enum class EventSource { Script, DecodedAudio, DecodedAux1, DecodedAux2, Network };

struct EventMarker {
  int code = 0;
  double onset_s = 0.0;
  EventSource source = EventSource::Script;
  std::optional<std::int64_t> raw_receive_time_ns;

  bool operator==(const EventMarker&) const = default;
};

enum class GazeDirection { TopLeft, TopRight, BottomLeft, BottomRight, Unknown };

inline constexpr GazeDirection kTrainableDirections[] = {GazeDirection::TopLeft, GazeDirection::TopRight,
                                                         GazeDirection::BottomLeft, GazeDirection::BottomRight};

std::string_view to_string(GazeDirection d);
std::string_view to_string(EventSource s);
std::optional<GazeDirection> parse_gaze_direction(std::string_view s);
std::optional<EventSource> parse_event_source(std::string_view s);

struct GazeInterval {
  double t0_s = 0.0;
  double t1_s = 0.0;
  GazeDirection direction = GazeDirection::Unknown;

  bool operator==(const GazeInterval&) const = default;
};

struct Manifest {
  std::string subject;
  std::string codec_digest;
};

struct Session {
  Recording recording;
  std::vector<EventMarker> events;  // ascending onset
  std::vector<GazeInterval> gaze;
  Manifest manifest;
};

enum class DataEncoding { F32le, Csv };

/// Every violated Recording invariant, each naming the channel and/or sample
/// involved. Empty iff the recording is valid. Never throws.
std::vector<std::string> validate_recording(const Recording& rec);

/// Structural problems that make a session unsavable: recording structure
/// (not amplitude range), event onsets/codes, gaze interval bounds and overlap.
std::vector<std::string> validate_session_structure(const Session& s);

/// Writes the session directory. Events are written in ascending onset
/// order. Float32 storage rounds samples to single precision.
void save_session(const Session& s, const std::filesystem::path& dir, DataEncoding encoding = DataEncoding::F32le);

/// Reads a session directory, re-validating structure. Events that were
/// edited out of order are re-sorted. Out-of-range samples are kept; use
/// validate_recording to list them.
Session load_session(const std::filesystem::path& dir);

/// Raw float32 little-endian helpers shared by the stream and session formats.
void write_f32le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32le(const std::filesystem::path& path);

}  // namespace gazetrace
