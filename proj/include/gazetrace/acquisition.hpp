#pragma once

// Three-role acquisition simulation: a producer streams audio-rate samples
// with marker bursts, a decoder detects them and forwards event messages,
// and a recorder assembles the 500 Hz session with delay-compensated
// onsets. The roles talk over loopback TCP, or step cooperatively in one
// thread with identical results under the virtual clock.
//
// Wire protocol (one JSON object per line):
//   {"type":"event","code":int,"t_stream_s":float,"t_send_ns":int}
//   {"type":"ping","t_send_ns":int}   answered by   {"type":"pong","t_echo_ns":int}
// Sample chunks use net::send_chunk framing.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gazetrace/marker_codec.hpp"
#include "gazetrace/net.hpp"
#include "gazetrace/session.hpp"
#include "gazetrace/synth.hpp"
#include "json.hpp"

namespace gazetrace {

struct ScriptEvent {
  double onset_s = 0.0;
  int code = 0;
};

struct EventScript {
  std::vector<ScriptEvent> events;
  double total_duration_s = 0.0;

  std::vector<std::string> validate(const CodecConfig& cfg) const;
};

nlohmann::json to_json(const EventScript& s);
EventScript script_from_json(const nlohmann::json& j);
/// `n` events with random codes and gaps wide enough that bursts and their
/// detection windows never overlap.
EventScript random_script(std::size_t n, std::uint64_t seed, const CodecConfig& cfg);

struct GazeCue {
  double t_s = 0.0;
  GazeDirection direction = GazeDirection::Unknown;
};
nlohmann::json to_json(const std::vector<GazeCue>& cues);
std::vector<GazeCue> gaze_cues_from_json(const nlohmann::json& j);

struct LinkStats {
  std::vector<std::int64_t> samples_ns;
  double mean_ns = 0.0;
  double p95_ns = 0.0;  // nearest rank
  double max_ns = 0.0;
};
/// Statistics over the magnitudes of `samples_ns`.
LinkStats link_stats(std::vector<std::int64_t> samples_ns);
nlohmann::json to_json(const LinkStats& s);

/// Residuals |recorded onset - scripted onset| of events matched in order.
/// DataError on a count or code mismatch.
LinkStats latency_report(const Session& session, const EventScript& script);

struct WireMessage {
  enum class Type { Event, Ping, Pong };
  Type type = Type::Event;
  int code = 0;
  double t_stream_s = 0.0;
  std::int64_t t_ns = 0;  // t_send_ns, or t_echo_ns for a pong
};
std::string encode_wire(const WireMessage& m);
/// DataError for malformed lines.
WireMessage parse_wire(std::string_view line);

enum class ClockMode {
  Virtual,  // timestamps derive from stream position; deterministic
  Wall,     // steady clock scaled by the compression factor
};

struct SimConfig {
  CodecConfig codec = CodecConfig::audio_default();
  CodecConfig aux_codec = CodecConfig::aux_default();
  GazeCodeTable gaze_table;
  double compress = 100.0;     // time compression; 0 streams as fast as possible
  double link_delay_ms = 0.0;  // artificial one-way delay on the event link
  std::size_t chunk_samples = 441;
  ClockMode clock = ClockMode::Virtual;
  bool compensate = true;
  int n_pings = 9;
  std::uint64_t seed = 0;  // EEG generator seed
  std::optional<SynthSpec> eeg;  // EEG generator settings; segments come from the gaze cues
  std::chrono::milliseconds io_timeout{10000};
  std::int64_t start_time_ns = 0;
};

/// Produces the scripted audio stream chunk by chunk.
class ProducerCore {
 public:
  ProducerCore(const EventScript& script, const CodecConfig& cfg, std::size_t chunk_samples);
  std::optional<std::vector<float>> next_chunk();
  /// Stream time at the end of the last chunk handed out.
  double position_s() const;
  const std::vector<double>& stream() const { return stream_; }

 private:
  std::vector<double> stream_;
  double rate_;
  std::size_t chunk_;
  std::size_t pos_ = 0;
};

/// Streaming detection plus event message construction.
class DecoderCore {
 public:
  explicit DecoderCore(const CodecConfig& cfg);
  /// Feeds one chunk. Under the virtual clock t_send_ns is the stream
  /// position after the chunk; otherwise `wall_now_ns` is used.
  std::vector<WireMessage> on_chunk(std::span<const float> chunk, std::optional<std::int64_t> wall_now_ns = {});

 private:
  StreamingDetector det_;
  double rate_;
  std::uint64_t samples_ = 0;
};

struct ReceivedEvent {
  int code = 0;
  double t_stream_s = 0.0;
  std::int64_t t_send_ns = 0;
  std::int64_t receive_ns = 0;  // recorder clock
};

/// Assembles the session from received events.
class RecorderCore {
 public:
  RecorderCore(double duration_s, std::vector<GazeCue> gaze, const SimConfig& cfg, std::int64_t delay_ns);
  void on_event(const ReceivedEvent& e);
  Session finish();
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  double duration_s_;
  std::vector<GazeCue> gaze_;
  SimConfig cfg_;
  std::int64_t delay_ns_;
  std::vector<ReceivedEvent> received_;
  std::vector<std::string> diagnostics_;
};

/// Answers ping lines with pong lines on every accepted connection.
class EchoResponder {
 public:
  EchoResponder();
  ~EchoResponder();
  net::Endpoint endpoint() const { return endpoint_; }

 private:
  net::Listener listener_;
  net::Endpoint endpoint_;
  std::atomic<bool> stop_{false};
  net::SocketSet live_;
  std::thread thread_;
};

/// Line-oriented TCP proxy that holds every line for `delay` in each direction.
class DelayRelay {
 public:
  DelayRelay(net::Endpoint upstream, std::chrono::nanoseconds delay);
  ~DelayRelay();
  net::Endpoint endpoint() const { return endpoint_; }

 private:
  net::Listener listener_;
  net::Endpoint endpoint_;
  net::Endpoint upstream_;
  std::chrono::nanoseconds delay_;
  std::atomic<bool> stop_{false};
  net::SocketSet live_;
  std::thread thread_;
};

/// Median over `n_pings` of RTT/2 in steady-clock nanoseconds. IoError on
/// timeout or a malformed reply.
std::int64_t estimate_link_delay(const net::Endpoint& ep, int n_pings,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(5),
                                 std::vector<std::int64_t>* samples_ns = nullptr);

/// Streams the script to `ep`, paced by `compress` (0 = unpaced).
void run_producer(const EventScript& script, const CodecConfig& cfg, const net::Endpoint& ep, double compress = 0.0,
                  std::size_t chunk_samples = 441,
                  std::optional<std::chrono::steady_clock::time_point> epoch = {});

struct DecoderTiming {
  ClockMode clock = ClockMode::Virtual;
  double compress = 1.0;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
};

/// Accepts the sample stream on `in`, forwards detections to `out`.
void run_decoder(net::Listener& in, const net::Endpoint& out, const CodecConfig& cfg, const DecoderTiming& timing = {},
                 std::chrono::milliseconds io_timeout = std::chrono::seconds(10));

/// Accepts the decoder's event link on `events` and assembles the session.
/// Under the virtual clock the receive time is t_send plus the modelled
/// link delay; under the wall clock it is read from `epoch`.
Session run_recorder(net::Listener& events, double duration_s, std::vector<GazeCue> gaze, const SimConfig& cfg,
                     std::int64_t delay_ns, std::vector<std::string>* diagnostics = nullptr,
                     std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now());

struct SimResult {
  Session session;
  std::int64_t delay_estimate_ns = 0;
  std::vector<std::string> diagnostics;
  double wall_seconds = 0.0;
};

/// Producer, decoder and recorder on separate threads over loopback TCP.
SimResult simulate(const EventScript& script, const std::vector<GazeCue>& gaze, const SimConfig& cfg);
/// The same pipeline stepped in one thread without sockets (virtual clock).
SimResult simulate_stepped(const EventScript& script, const std::vector<GazeCue>& gaze, const SimConfig& cfg);

}  // namespace gazetrace
