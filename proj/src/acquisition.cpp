#include "gazetrace/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>

#include "gazetrace/errors.hpp"
#include "json_util.hpp"

namespace gazetrace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::int64_t to_ns(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1e9)); }

std::int64_t scaled_since(Clock::time_point epoch, double compress) {
  const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - epoch).count();
  return static_cast<std::int64_t>(std::llround(static_cast<double>(wall) * (compress > 0.0 ? compress : 1.0)));
}

// Runs `fn` on a thread and keeps its exception for the joiner.
class Worker {
 public:
  template <typename F>
  explicit Worker(F fn)
      : thread_([this, fn = std::move(fn)]() mutable {
          try {
            fn();
          } catch (...) {
            error_ = std::current_exception();
          }
        }) {}
  ~Worker() {
    if (thread_.joinable()) thread_.join();
  }
  std::exception_ptr join() {
    if (thread_.joinable()) thread_.join();
    return error_;
  }

 private:
  std::exception_ptr error_;
  std::thread thread_;
};

}  // namespace

// ---- scripts ---------------------------------------------------------------

std::vector<std::string> EventScript::validate(const CodecConfig& cfg) const {
  std::vector<std::string> out;
  if (!(total_duration_s > 0.0)) out.push_back("total_duration_s must be positive");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string at = "event " + std::to_string(i);
    if (!(e.onset_s >= 0.0) || !(e.onset_s < total_duration_s)) out.push_back(at + ": onset outside [0, duration)");
    if (i > 0 && !(e.onset_s > events[i - 1].onset_s)) out.push_back(at + ": onsets must be strictly increasing");
    if (!cfg.codebook.contains(e.code)) out.push_back(at + ": code " + std::to_string(e.code) + " not in codebook");
    if (e.onset_s + cfg.burst_duration_s > total_duration_s) out.push_back(at + ": burst runs past the end of the script");
  }
  return out;
}

json to_json(const EventScript& s) {
  json ev = json::array();
  for (const auto& e : s.events) ev.push_back({{"onset_s", e.onset_s}, {"code", e.code}});
  return {{"total_duration_s", s.total_duration_s}, {"events", ev}};
}

EventScript script_from_json(const json& j) {
  const std::string where = "event script";
  EventScript s;
  s.total_duration_s = detail::field<double>(j, "total_duration_s", where);
  if (!j.contains("events") || !j["events"].is_array()) throw DataError(where + ": missing array 'events'");
  for (const auto& e : j["events"])
    s.events.push_back({detail::field<double>(e, "onset_s", where), detail::field<int>(e, "code", where)});
  return s;
}

EventScript random_script(std::size_t n, std::uint64_t seed, const CodecConfig& cfg) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5C817u};
  std::mt19937_64 rng(seq);
  std::vector<int> codes;
  for (const auto& [c, f] : cfg.codebook) codes.push_back(c);
  if (codes.empty()) throw DataError("empty codebook");
  std::uniform_int_distribution<std::size_t> pick(0, codes.size() - 1);
  std::uniform_real_distribution<double> jitter(0.0, 0.3);
  EventScript s;
  double t = 0.25;
  for (std::size_t i = 0; i < n; ++i) {
    t = std::round(t * cfg.sample_rate_hz) / cfg.sample_rate_hz;
    s.events.push_back({t, codes[pick(rng)]});
    t += cfg.burst_duration_s + 2.0 * cfg.detect_window_s + 0.1 + jitter(rng);
  }
  s.total_duration_s = t + 0.25;
  return s;
}

json to_json(const std::vector<GazeCue>& cues) {
  json out = json::array();
  for (const auto& c : cues) out.push_back({{"t_s", c.t_s}, {"direction", to_string(c.direction)}});
  return out;
}

std::vector<GazeCue> gaze_cues_from_json(const json& j) {
  if (!j.is_array()) throw DataError("gaze script must be a JSON array");
  std::vector<GazeCue> out;
  for (const auto& c : j) {
    const auto name = detail::field<std::string>(c, "direction", "gaze script");
    const auto d = parse_gaze_direction(name);
    if (!d) throw DataError("gaze script: unknown direction '" + name + "'");
    out.push_back({detail::field<double>(c, "t_s", "gaze script"), *d});
  }
  return out;
}

// ---- statistics ------------------------------------------------------------

LinkStats link_stats(std::vector<std::int64_t> samples_ns) {
  LinkStats s;
  s.samples_ns = std::move(samples_ns);
  if (s.samples_ns.empty()) return s;
  std::vector<double> mags;
  for (auto v : s.samples_ns) mags.push_back(std::abs(static_cast<double>(v)));
  std::sort(mags.begin(), mags.end());
  double sum = 0.0;
  for (double v : mags) sum += v;
  s.mean_ns = sum / static_cast<double>(mags.size());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(mags.size())));
  s.p95_ns = mags[std::max<std::size_t>(rank, 1) - 1];
  s.max_ns = mags.back();
  return s;
}

json to_json(const LinkStats& s) {
  return {{"n", s.samples_ns.size()},
          {"mean_ms", s.mean_ns / 1e6},
          {"p95_ms", s.p95_ns / 1e6},
          {"max_ms", s.max_ns / 1e6},
          {"residuals_ns", s.samples_ns}};
}

LinkStats latency_report(const Session& session, const EventScript& script) {
  std::vector<EventMarker> recorded = session.events;
  std::stable_sort(recorded.begin(), recorded.end(),
                   [](const EventMarker& a, const EventMarker& b) { return a.onset_s < b.onset_s; });
  if (recorded.size() != script.events.size())
    throw DataError("session has " + std::to_string(recorded.size()) + " events, script has " +
                    std::to_string(script.events.size()));
  std::vector<std::int64_t> res;
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    if (recorded[i].code != script.events[i].code)
      throw DataError("event " + std::to_string(i) + ": recorded code " + std::to_string(recorded[i].code) +
                      " does not match scripted code " + std::to_string(script.events[i].code));
    res.push_back(to_ns(recorded[i].onset_s - script.events[i].onset_s));
  }
  return link_stats(std::move(res));
}

// ---- wire ------------------------------------------------------------------

std::string encode_wire(const WireMessage& m) {
  json j;
  switch (m.type) {
    case WireMessage::Type::Event:
      j = {{"type", "event"}, {"code", m.code}, {"t_stream_s", m.t_stream_s}, {"t_send_ns", m.t_ns}};
      break;
    case WireMessage::Type::Ping:
      j = {{"type", "ping"}, {"t_send_ns", m.t_ns}};
      break;
    case WireMessage::Type::Pong:
      j = {{"type", "pong"}, {"t_echo_ns", m.t_ns}};
      break;
  }
  return j.dump();
}

WireMessage parse_wire(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw DataError("malformed wire message: " + std::string(line));
  }
  const std::string where = "wire message";
  const auto type = detail::field<std::string>(j, "type", where);
  WireMessage m;
  if (type == "event") {
    m.type = WireMessage::Type::Event;
    m.code = detail::field<int>(j, "code", where);
    m.t_stream_s = detail::field<double>(j, "t_stream_s", where);
    m.t_ns = detail::field<std::int64_t>(j, "t_send_ns", where);
  } else if (type == "ping") {
    m.type = WireMessage::Type::Ping;
    m.t_ns = detail::field<std::int64_t>(j, "t_send_ns", where);
  } else if (type == "pong") {
    m.type = WireMessage::Type::Pong;
    m.t_ns = detail::field<std::int64_t>(j, "t_echo_ns", where);
  } else {
    throw DataError("unknown wire message type '" + type + "'");
  }
  return m;
}

// ---- cores -----------------------------------------------------------------

ProducerCore::ProducerCore(const EventScript& script, const CodecConfig& cfg, std::size_t chunk_samples)
    : rate_(cfg.sample_rate_hz), chunk_(chunk_samples) {
  cfg.check();
  if (auto v = script.validate(cfg); !v.empty()) throw DataError("invalid event script: " + v.front());
  if (chunk_ == 0) throw DataError("chunk size must be positive");
  stream_.assign(static_cast<std::size_t>(std::llround(script.total_duration_s * rate_)), 0.0);
  for (const auto& e : script.events) inject_into(stream_, rate_, e.onset_s, encode_burst(cfg.codebook.at(e.code), cfg));
}

std::optional<std::vector<float>> ProducerCore::next_chunk() {
  if (pos_ >= stream_.size()) return std::nullopt;
  const std::size_t end = std::min(stream_.size(), pos_ + chunk_);
  std::vector<float> out(stream_.begin() + static_cast<std::ptrdiff_t>(pos_),
                         stream_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return out;
}

double ProducerCore::position_s() const { return static_cast<double>(pos_) / rate_; }

DecoderCore::DecoderCore(const CodecConfig& cfg) : det_(cfg), rate_(cfg.sample_rate_hz) {}

std::vector<WireMessage> DecoderCore::on_chunk(std::span<const float> chunk, std::optional<std::int64_t> wall_now_ns) {
  std::vector<double> x(chunk.begin(), chunk.end());
  det_.feed(x);
  samples_ += chunk.size();
  const std::int64_t now = wall_now_ns ? *wall_now_ns : to_ns(static_cast<double>(samples_) / rate_);
  std::vector<WireMessage> out;
  for (const auto& e : det_.poll()) out.push_back({WireMessage::Type::Event, e.code, e.onset_s, now});
  return out;
}

RecorderCore::RecorderCore(double duration_s, std::vector<GazeCue> gaze, const SimConfig& cfg, std::int64_t delay_ns)
    : duration_s_(duration_s), gaze_(std::move(gaze)), cfg_(cfg), delay_ns_(delay_ns) {
  if (!(duration_s_ > 0.0)) throw DataError("recording duration must be positive");
  std::stable_sort(gaze_.begin(), gaze_.end(), [](const GazeCue& a, const GazeCue& b) { return a.t_s < b.t_s; });
  for (const auto& g : gaze_)
    if (g.t_s < 0.0 || g.t_s >= duration_s_) throw DataError("gaze cue at " + std::to_string(g.t_s) + " s lies outside the recording");
}

void RecorderCore::on_event(const ReceivedEvent& e) { received_.push_back(e); }

Session RecorderCore::finish() {
  const double rate = kEegSampleRateHz;
  const auto total = static_cast<std::size_t>(std::llround(duration_s_ * rate));

  SynthSpec spec = cfg_.eeg.value_or(SynthSpec::defaults());
  if (!cfg_.eeg) spec.seed = cfg_.seed;
  spec.sample_rate_hz = rate;
  const std::string neutral(to_string(GazeDirection::Unknown));
  if (!spec.signature_map.contains(neutral)) spec.signature_map[neutral] = {1.0, 1.0, 1.0, 1.0, 1.0};
  spec.directions.clear();
  std::vector<std::pair<double, std::string>> bounds;
  if (gaze_.empty() || gaze_.front().t_s > 0.0) bounds.emplace_back(0.0, neutral);
  for (const auto& g : gaze_) bounds.emplace_back(g.t_s, std::string(to_string(g.direction)));
  std::size_t used = 0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto end = i + 1 < bounds.size() ? static_cast<std::size_t>(std::llround(bounds[i + 1].first * rate)) : total;
    if (end <= used) continue;
    spec.directions.push_back({bounds[i].second, static_cast<double>(end - used) / rate});
    used = end;
  }
  Session s = gen_session(spec).session;
  auto& rec = s.recording;
  rec.start_time_ns = cfg_.start_time_ns;
  for (const auto& g : s.gaze) {
    if (g.direction == GazeDirection::Unknown) continue;
    if (g.t1_s - g.t0_s < cfg_.gaze_table.encoded_duration_s(g.direction))
      diagnostics_.push_back("gaze interval at " + std::to_string(g.t0_s) + " s is too short for its AUX2 code");
  }

  const std::size_t aux1 = rec.require_channel(kAux1);
  const double latest = duration_s_ - cfg_.aux_codec.burst_duration_s;
  std::vector<double> aux(rec.data.row(aux1).begin(), rec.data.row(aux1).end());
  for (const auto& e : received_) {
    std::int64_t onset_ns = e.receive_ns;
    if (cfg_.compensate) onset_ns -= delay_ns_ + (e.t_send_ns - to_ns(e.t_stream_s));
    double onset = static_cast<double>(onset_ns) / 1e9;
    if (onset < 0.0) {
      diagnostics_.push_back("event code " + std::to_string(e.code) + " arrived before recording start (onset " +
                             std::to_string(onset) + " s); clamped to 0");
      onset = 0.0;
    }
    if (onset > latest) {
      diagnostics_.push_back("event code " + std::to_string(e.code) + " at " + std::to_string(onset) +
                             " s is past the end of the recording; clamped");
      onset = std::max(0.0, latest);
    }
    s.events.push_back({e.code, onset, EventSource::Network, e.receive_ns});
    const auto f = cfg_.aux_codec.codebook.find(e.code);
    if (f == cfg_.aux_codec.codebook.end()) {
      diagnostics_.push_back("event code " + std::to_string(e.code) + " has no AUX1 tone; not written to AUX1");
      continue;
    }
    auto burst = encode_burst(f->second, cfg_.aux_codec);
    for (double& v : burst) v *= kAuxFullScaleUv;
    inject_into(aux, rate, onset, burst);
  }
  for (std::size_t i = 0; i < aux.size(); ++i) rec.data(aux1, i) = static_cast<float>(aux[i]);
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const EventMarker& a, const EventMarker& b) { return a.onset_s < b.onset_s; });
  s.manifest.subject = "simulated";
  s.manifest.codec_digest = cfg_.codec.digest();
  return s;
}

// ---- socket roles ----------------------------------------------------------

EchoResponder::EchoResponder() : endpoint_(listener_.endpoint()) {
  thread_ = std::thread([this] {
    std::vector<std::thread> sessions;
    while (!stop_) {
      net::Socket s;
      try {
        s = listener_.accept(std::chrono::milliseconds(50));
      } catch (const IoError&) {
        continue;
      }
      sessions.emplace_back([this, sock = std::move(s)]() mutable {
        live_.add(&sock);
        try {
          while (auto line = sock.read_line()) {
            const auto m = parse_wire(*line);
            if (m.type != WireMessage::Type::Ping) continue;
            sock.send_line(encode_wire({WireMessage::Type::Pong, 0, 0.0, m.t_ns}));
          }
        } catch (const Error&) {
        }
        live_.remove(&sock);
      });
    }
    for (auto& t : sessions) t.join();
  });
}

EchoResponder::~EchoResponder() {
  stop_ = true;
  live_.shutdown_all();
  thread_.join();
}

DelayRelay::DelayRelay(net::Endpoint upstream, std::chrono::nanoseconds delay)
    : endpoint_(listener_.endpoint()), upstream_(std::move(upstream)), delay_(delay) {
  thread_ = std::thread([this] {
    net::Socket down;
    while (!stop_) {
      try {
        down = listener_.accept(std::chrono::milliseconds(50));
        break;
      } catch (const IoError&) {
      }
    }
    if (!down.valid()) return;
    net::Socket up;
    try {
      up = net::connect_to(upstream_, std::chrono::seconds(5));
    } catch (const IoError&) {
      return;
    }
    live_.add(&down);
    live_.add(&up);
    std::mutex m;
    auto pump = [&](net::Socket& from, net::Socket& to) {
      try {
        while (auto line = from.read_line()) {
          std::this_thread::sleep_until(Clock::now() + delay_);
          std::lock_guard lock(m);
          to.send_line(*line);
        }
      } catch (const Error&) {
      }
      std::lock_guard lock(m);
      to.shutdown_write();
    };
    std::thread back([&] { pump(up, down); });
    pump(down, up);
    back.join();
    live_.remove(&down);
    live_.remove(&up);
  });
}

DelayRelay::~DelayRelay() {
  stop_ = true;
  live_.shutdown_all();
  thread_.join();
}

std::int64_t estimate_link_delay(const net::Endpoint& ep, int n_pings, std::chrono::milliseconds timeout,
                                 std::vector<std::int64_t>* samples_ns) {
  if (n_pings < 1) throw DataError("n_pings must be at least 1");
  net::Socket s = net::connect_to(ep, timeout);
  s.set_recv_timeout(timeout);
  std::vector<std::int64_t> half;
  const auto origin = Clock::now();
  for (int i = 0; i < n_pings; ++i) {
    const auto t0 = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - origin).count();
    s.send_line(encode_wire({WireMessage::Type::Ping, 0, 0.0, t0}));
    const auto line = s.read_line();
    if (!line) throw IoError("echo responder closed the connection");
    const auto m = parse_wire(*line);
    if (m.type != WireMessage::Type::Pong || m.t_ns != t0) throw IoError("unexpected reply to ping: " + *line);
    const auto t1 = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - origin).count();
    half.push_back((t1 - t0) / 2);
  }
  if (samples_ns) *samples_ns = half;
  std::sort(half.begin(), half.end());
  const std::size_t n = half.size();
  return n % 2 ? half[n / 2] : (half[n / 2 - 1] + half[n / 2]) / 2;
}

void run_producer(const EventScript& script, const CodecConfig& cfg, const net::Endpoint& ep, double compress,
                  std::size_t chunk_samples, std::optional<Clock::time_point> epoch) {
  ProducerCore core(script, cfg, chunk_samples);
  net::Socket s = net::connect_to(ep);
  const auto start = epoch.value_or(Clock::now());
  while (auto chunk = core.next_chunk()) {
    if (compress > 0.0) {
      const auto due = std::chrono::nanoseconds(static_cast<std::int64_t>(core.position_s() * 1e9 / compress));
      std::this_thread::sleep_until(start + due);
    }
    net::send_chunk(s, *chunk);
  }
  s.shutdown_write();
}

void run_decoder(net::Listener& in, const net::Endpoint& out, const CodecConfig& cfg, const DecoderTiming& timing,
                 std::chrono::milliseconds io_timeout) {
  DecoderCore core(cfg);
  net::Socket src = in.accept(io_timeout);
  src.set_recv_timeout(io_timeout);
  net::Socket dst = net::connect_to(out, io_timeout);
  while (auto chunk = net::recv_chunk(src)) {
    std::optional<std::int64_t> now;
    if (timing.clock == ClockMode::Wall) now = scaled_since(timing.epoch, timing.compress);
    for (const auto& m : core.on_chunk(*chunk, now)) dst.send_line(encode_wire(m));
  }
  dst.shutdown_write();
  // Wait for the peer to finish reading before closing.
  dst.set_recv_timeout(io_timeout);
  try {
    while (dst.read_line()) {
    }
  } catch (const IoError&) {
  }
}

Session run_recorder(net::Listener& events, double duration_s, std::vector<GazeCue> gaze, const SimConfig& cfg,
                     std::int64_t delay_ns, std::vector<std::string>* diagnostics, Clock::time_point epoch) {
  RecorderCore core(duration_s, std::move(gaze), cfg, delay_ns);
  net::Socket s = events.accept(cfg.io_timeout);
  s.set_recv_timeout(cfg.io_timeout);
  const std::int64_t modelled = to_ns(cfg.link_delay_ms / 1e3);
  while (auto line = s.read_line()) {
    const auto m = parse_wire(*line);
    if (m.type != WireMessage::Type::Event) continue;
    ReceivedEvent e{m.code, m.t_stream_s, m.t_ns, 0};
    e.receive_ns = cfg.clock == ClockMode::Virtual ? m.t_ns + modelled : scaled_since(epoch, cfg.compress);
    core.on_event(e);
  }
  s.shutdown_write();
  Session out = core.finish();
  if (diagnostics) *diagnostics = core.diagnostics();
  return out;
}

// ---- whole pipeline --------------------------------------------------------

namespace {

void check_sim(const EventScript& script, const std::vector<GazeCue>& gaze, const SimConfig& cfg) {
  for (const auto& g : gaze)
    if (g.t_s < 0.0 || g.t_s >= script.total_duration_s)
      throw DataError("gaze cue at " + std::to_string(g.t_s) + " s lies outside the script's " +
                      std::to_string(script.total_duration_s) + " s");
  cfg.codec.check();
  cfg.aux_codec.check();
  if (auto v = script.validate(cfg.codec); !v.empty()) throw DataError("invalid event script: " + v.front());
  if (cfg.compress < 0.0) throw DataError("compression factor must be non-negative");
  if (cfg.clock == ClockMode::Wall && !(cfg.compress > 0.0)) throw DataError("wall clock mode needs a compression factor");
  if (cfg.link_delay_ms < 0.0) throw DataError("link delay must be non-negative");
}

}  // namespace

SimResult simulate(const EventScript& script, const std::vector<GazeCue>& gaze, const SimConfig& cfg) {
  check_sim(script, gaze, cfg);
  const auto wall_start = Clock::now();
  SimResult res;

  net::Listener sample_in;
  net::Listener event_in;
  const auto one_way = std::chrono::nanoseconds(
      cfg.clock == ClockMode::Wall ? static_cast<std::int64_t>(cfg.link_delay_ms * 1e6 / cfg.compress) : 0);

  std::int64_t delay_ns = 0;
  if (cfg.clock == ClockMode::Wall) {
    EchoResponder echo;
    std::optional<DelayRelay> ping_relay;
    net::Endpoint ping_ep = echo.endpoint();
    if (one_way.count() > 0) {
      ping_relay.emplace(echo.endpoint(), one_way);
      ping_ep = ping_relay->endpoint();
    }
    const auto wall_ns = estimate_link_delay(ping_ep, cfg.n_pings, cfg.io_timeout);
    delay_ns = static_cast<std::int64_t>(std::llround(static_cast<double>(wall_ns) * cfg.compress));
    res.diagnostics.push_back("link delay measured: " + std::to_string(delay_ns) + " ns stream time");
  } else {
    delay_ns = to_ns(cfg.link_delay_ms / 1e3);
    res.diagnostics.push_back("link delay modelled: " + std::to_string(delay_ns) + " ns");
  }
  res.delay_estimate_ns = delay_ns;

  std::optional<DelayRelay> event_relay;
  net::Endpoint event_ep = event_in.endpoint();
  if (one_way.count() > 0) {
    event_relay.emplace(event_in.endpoint(), one_way);
    event_ep = event_relay->endpoint();
  }

  const auto epoch = Clock::now() + std::chrono::milliseconds(20);
  const DecoderTiming timing{cfg.clock, cfg.compress, epoch};
  Worker decoder([&] { run_decoder(sample_in, event_ep, cfg.codec, timing, cfg.io_timeout); });
  Worker producer([&] {
    run_producer(script, cfg.codec, sample_in.endpoint(), cfg.compress, cfg.chunk_samples, epoch);
  });
  std::exception_ptr err;
  std::vector<std::string> diag;
  try {
    res.session = run_recorder(event_in, script.total_duration_s, gaze, cfg, delay_ns, &diag, epoch);
  } catch (...) {
    err = std::current_exception();
  }
  if (auto e = producer.join(); e && !err) err = e;
  if (auto e = decoder.join(); e && !err) err = e;
  if (err) std::rethrow_exception(err);
  res.diagnostics.insert(res.diagnostics.end(), diag.begin(), diag.end());
  res.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
  return res;
}

SimResult simulate_stepped(const EventScript& script, const std::vector<GazeCue>& gaze, const SimConfig& cfg) {
  check_sim(script, gaze, cfg);
  if (cfg.clock != ClockMode::Virtual) throw DataError("stepped simulation requires the virtual clock");
  const auto wall_start = Clock::now();
  SimResult res;
  res.delay_estimate_ns = to_ns(cfg.link_delay_ms / 1e3);
  res.diagnostics.push_back("link delay modelled: " + std::to_string(res.delay_estimate_ns) + " ns");
  ProducerCore producer(script, cfg.codec, cfg.chunk_samples);
  DecoderCore decoder(cfg.codec);
  RecorderCore recorder(script.total_duration_s, gaze, cfg, res.delay_estimate_ns);
  while (auto chunk = producer.next_chunk())
    for (const auto& m : decoder.on_chunk(*chunk))
      recorder.on_event({m.code, m.t_stream_s, m.t_ns, m.t_ns + res.delay_estimate_ns});
  res.session = recorder.finish();
  res.diagnostics.insert(res.diagnostics.end(), recorder.diagnostics().begin(), recorder.diagnostics().end());
  res.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
  return res;
}

}  // namespace gazetrace
