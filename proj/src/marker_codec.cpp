#include "gazetrace/marker_codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "gazetrace/errors.hpp"
#include "gazetrace/kernels.hpp"
#include "json_util.hpp"

namespace gazetrace {

using nlohmann::json;

namespace {

std::size_t samples_for(double seconds, double rate) {
  return static_cast<std::size_t>(std::floor(seconds * rate + 1e-9));
}

double ramp_gain(double m, double ramp_samples) {
  if (ramp_samples <= 0.0 || m >= ramp_samples) return 1.0;
  if (m <= 0.0) return 0.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * m / ramp_samples));
}

std::vector<double> ramped_tone(double freq_hz, std::size_t n, double amplitude, double ramp_s, double rate) {
  std::vector<double> out(n);
  const double r = ramp_s * rate;
  const double w = 2.0 * std::numbers::pi * freq_hz / rate;
  for (std::size_t i = 0; i < n; ++i) {
    const double env = std::min(ramp_gain(static_cast<double>(i), r), ramp_gain(static_cast<double>(n - i), r));
    out[i] = static_cast<float>(amplitude * env * std::sin(w * static_cast<double>(i)));
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

CodecConfig CodecConfig::audio_default() {
  CodecConfig c;
  for (int i = 0; i < 8; ++i) c.codebook[i + 1] = 1000.0 + 250.0 * i;
  return c;
}

CodecConfig CodecConfig::aux_default() {
  CodecConfig c;
  c.sample_rate_hz = kEegSampleRateHz;
  for (int i = 0; i < 8; ++i) c.codebook[i + 1] = 30.0 + 25.0 * i;
  c.burst_duration_s = 0.100;
  c.ramp_s = 0.010;
  c.detect_window_s = 0.080;
  c.detect_hop_s = 0.010;
  return c;
}

std::vector<std::string> CodecConfig::validate() const {
  std::vector<std::string> out;
  if (!(sample_rate_hz > 0.0)) out.push_back("sample_rate_hz must be positive");
  if (codebook.empty()) out.push_back("codebook is empty");
  if (!(amplitude >= 0.0 && amplitude <= 1.0)) out.push_back("amplitude must lie in [0, 1]");
  if (!(detect_window_s > 0.0) || !(detect_hop_s > 0.0)) out.push_back("detection window and hop must be positive");
  if (burst_duration_s < 2.0 * ramp_s) out.push_back("burst_duration_s must be at least 2 * ramp_s");
  if (burst_duration_s < detect_window_s) out.push_back("burst_duration_s must cover one detection window");
  if (!(min_tone_fill > 0.0 && min_tone_fill <= 1.0)) out.push_back("min_tone_fill must lie in (0, 1]");
  if (window_samples() < 2) out.push_back("detection window shorter than 2 samples");
  const double resolvable = 2.0 / detect_window_s;
  double prev = -1.0;
  std::vector<double> freqs;
  for (const auto& [code, f] : codebook) {
    if (code < 0) out.push_back("code " + std::to_string(code) + " is negative");
    if (!(f > 0.0) || f >= sample_rate_hz / 2.0)
      out.push_back("code " + std::to_string(code) + ": " + std::to_string(f) + " Hz is not below Nyquist");
    freqs.push_back(f);
  }
  std::sort(freqs.begin(), freqs.end());
  for (double f : freqs) {
    if (prev >= 0.0 && f - prev < resolvable - 1e-9)
      out.push_back("codebook frequencies " + std::to_string(prev) + " and " + std::to_string(f) +
                    " Hz are closer than " + std::to_string(resolvable) + " Hz");
    prev = f;
  }
  return out;
}

void CodecConfig::check() const {
  if (auto v = validate(); !v.empty()) throw DataError("invalid codec config: " + v.front());
}

std::size_t CodecConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(detect_window_s * sample_rate_hz));
}

std::size_t CodecConfig::burst_samples() const { return samples_for(burst_duration_s, sample_rate_hz); }

std::size_t CodecConfig::window_start(std::size_t k) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(k) * detect_hop_s * sample_rate_hz));
}

std::string CodecConfig::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(*this).dump())));
  return buf;
}

json to_json(const CodecConfig& cfg) {
  json cb = json::object();
  for (const auto& [code, f] : cfg.codebook) cb[std::to_string(code)] = f;
  return {
      {"sample_rate_hz", cfg.sample_rate_hz},
      {"codebook", cb},
      {"burst_duration_s", cfg.burst_duration_s},
      {"amplitude", cfg.amplitude},
      {"ramp_s", cfg.ramp_s},
      {"detect_window_s", cfg.detect_window_s},
      {"detect_hop_s", cfg.detect_hop_s},
      {"power_threshold_ratio", cfg.power_threshold_ratio},
      {"min_tone_fill", cfg.min_tone_fill},
  };
}

std::map<int, double> codebook_from_json(const json& j) {
  if (!j.is_object()) throw DataError("codebook must be a JSON object {code: frequency_hz}");
  std::map<int, double> cb;
  for (const auto& [key, value] : j.items()) {
    int code = 0;
    try {
      std::size_t used = 0;
      code = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw DataError("codebook key '" + key + "' is not an integer code");
    }
    if (!value.is_number()) throw DataError("codebook entry '" + key + "' is not a number");
    cb[code] = value.get<double>();
  }
  return cb;
}

CodecConfig codec_from_json(const json& j) {
  CodecConfig c = CodecConfig::audio_default();
  if (!j.is_object()) throw DataError("codec config must be a JSON object");
  auto opt = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = detail::field<double>(j, key, "codec config");
  };
  opt("sample_rate_hz", c.sample_rate_hz);
  opt("burst_duration_s", c.burst_duration_s);
  opt("amplitude", c.amplitude);
  opt("ramp_s", c.ramp_s);
  opt("detect_window_s", c.detect_window_s);
  opt("detect_hop_s", c.detect_hop_s);
  opt("power_threshold_ratio", c.power_threshold_ratio);
  opt("min_tone_fill", c.min_tone_fill);
  if (j.contains("codebook")) c.codebook = codebook_from_json(j["codebook"]);
  return c;
}

std::vector<std::string> GazeCodeTable::validate(double rate_hz) const {
  std::vector<std::string> out;
  const double nyq = rate_hz / 2.0;
  for (double f : {freq_left_hz, freq_right_hz, freq_pulse2_hz})
    if (!(f > 0.0) || f >= nyq) out.push_back("gaze code frequency " + std::to_string(f) + " Hz is not below Nyquist");
  if (freq_left_hz == freq_right_hz) out.push_back("left and right pulse frequencies coincide");
  if (freq_pulse2_hz == freq_left_hz || freq_pulse2_hz == freq_right_hz)
    out.push_back("second pulse frequency coincides with a first-pulse frequency");
  if (!(duration_top_s < duration_bottom_s)) out.push_back("top pulse must be shorter than bottom pulse");
  if (!(gap_s > 0.0)) out.push_back("gap must be positive");
  return out;
}

double GazeCodeTable::encoded_duration_s(GazeDirection d) const {
  const bool top = d == GazeDirection::TopLeft || d == GazeDirection::TopRight;
  return pulse1_duration_s + gap_s + (top ? duration_top_s : duration_bottom_s);
}

std::vector<double> encode_burst(double freq_hz, const CodecConfig& cfg) {
  if (!(freq_hz > 0.0) || freq_hz >= cfg.sample_rate_hz / 2.0)
    throw DataError("encode_burst: " + std::to_string(freq_hz) + " Hz is at or above Nyquist (" +
                    std::to_string(cfg.sample_rate_hz / 2.0) + " Hz)");
  return ramped_tone(freq_hz, cfg.burst_samples(), cfg.amplitude, cfg.ramp_s, cfg.sample_rate_hz);
}

void inject_into(std::vector<double>& stream, double rate_hz, double onset_s, std::span<const double> burst) {
  if (burst.empty()) return;
  if (!(onset_s >= 0.0)) throw DataError("inject: negative onset");
  const auto start = static_cast<std::size_t>(std::floor(onset_s * rate_hz + 1e-9));
  if (start + burst.size() > stream.size())
    throw DataError("inject: burst of " + std::to_string(burst.size()) + " samples at sample " +
                    std::to_string(start) + " overruns the stream end (" + std::to_string(stream.size()) + ")");
  for (std::size_t i = 0; i < burst.size(); ++i) stream[start + i] += burst[i];
}

std::vector<double> inject(std::span<const double> stream, double rate_hz, double onset_s,
                           std::span<const double> burst) {
  std::vector<double> out(stream.begin(), stream.end());
  inject_into(out, rate_hz, onset_s, burst);
  return out;
}

double goertzel_power(std::span<const double> window, double freq_hz, double rate_hz) {
  return kernels::goertzel(window, 2.0 * std::numbers::pi * freq_hz / rate_hz);
}

namespace {

bool window_active(double tone_power, double energy, std::size_t n, const CodecConfig& cfg) {
  if (!(energy > 0.0)) return false;
  if (!(tone_power > cfg.power_threshold_ratio * energy)) return false;
  const double fill = 2.0 * tone_power / (static_cast<double>(n) * energy);
  return fill >= cfg.min_tone_fill;
}

}  // namespace

std::vector<DetectedEvent> detect_bursts(std::span<const double> stream, const CodecConfig& cfg) {
  cfg.check();
  const std::size_t n = cfg.window_samples();
  std::vector<std::size_t> starts;
  for (std::size_t k = 0;; ++k) {
    const std::size_t s = cfg.window_start(k);
    if (s + n > stream.size()) break;
    starts.push_back(s);
  }
  std::vector<int> codes;
  std::vector<double> omegas;
  for (const auto& [code, f] : cfg.codebook) {
    codes.push_back(code);
    omegas.push_back(2.0 * std::numbers::pi * f / cfg.sample_rate_hz);
  }
  const auto powers = kernels::omp::goertzel_windows(stream, starts, n, omegas);
  const auto energies = kernels::omp::window_energies(stream, starts, n);

  std::vector<DetectedEvent> out;
  std::vector<bool> in_run(codes.size(), false);
  for (std::size_t w = 0; w < starts.size(); ++w) {
    for (std::size_t c = 0; c < codes.size(); ++c) {
      const bool active = window_active(powers[w * codes.size() + c], energies[w], n, cfg);
      if (active && !in_run[c]) out.push_back({codes[c], static_cast<double>(starts[w]) / cfg.sample_rate_hz});
      in_run[c] = active;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
  return out;
}

StreamingDetector::StreamingDetector(CodecConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.check();
  window_len_ = cfg_.window_samples();
  for (const auto& [code, f] : cfg_.codebook) {
    codes_.push_back(code);
    omegas_.push_back(2.0 * std::numbers::pi * f / cfg_.sample_rate_hz);
  }
  in_run_.assign(codes_.size(), false);
  scratch_.resize(window_len_);
}

void StreamingDetector::feed(std::span<const double> chunk) {
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  consumed_ += chunk.size();
  evaluate_ready_windows();
}

void StreamingDetector::evaluate_ready_windows() {
  const std::size_t starts[1] = {0};
  for (;;) {
    const std::uint64_t start = cfg_.window_start(next_window_);
    if (start + window_len_ > consumed_) break;
    const auto offset = static_cast<std::size_t>(start - buffer_origin_);
    std::copy(buffer_.begin() + static_cast<std::ptrdiff_t>(offset),
              buffer_.begin() + static_cast<std::ptrdiff_t>(offset + window_len_), scratch_.begin());
    const auto powers = kernels::serial::goertzel_windows(scratch_, starts, window_len_, omegas_);
    const double energy = kernels::serial::window_energies(scratch_, starts, window_len_)[0];
    for (std::size_t c = 0; c < codes_.size(); ++c) {
      const bool active = window_active(powers[c], energy, window_len_, cfg_);
      if (active && !in_run_[c]) pending_.push_back({codes_[c], static_cast<double>(start) / cfg_.sample_rate_hz});
      in_run_[c] = active;
    }
    ++next_window_;
    const std::uint64_t keep_from = cfg_.window_start(next_window_);
    while (buffer_origin_ < keep_from && !buffer_.empty()) {
      buffer_.pop_front();
      ++buffer_origin_;
    }
  }
}

std::vector<DetectedEvent> StreamingDetector::poll() {
  std::vector<DetectedEvent> out;
  out.swap(pending_);
  return out;
}

std::vector<double> encode_gaze(GazeDirection direction, const GazeCodeTable& table, double rate_hz) {
  if (direction == GazeDirection::Unknown) throw DataError("encode_gaze: Unknown is not an encodable direction");
  if (auto v = table.validate(rate_hz); !v.empty()) throw DataError("invalid gaze code table: " + v.front());
  const bool left = direction == GazeDirection::TopLeft || direction == GazeDirection::BottomLeft;
  const bool top = direction == GazeDirection::TopLeft || direction == GazeDirection::TopRight;
  auto out = ramped_tone(left ? table.freq_left_hz : table.freq_right_hz, samples_for(table.pulse1_duration_s, rate_hz),
                         table.amplitude, table.ramp_s, rate_hz);
  out.resize(out.size() + samples_for(table.gap_s, rate_hz), 0.0);
  const auto p2 = ramped_tone(table.freq_pulse2_hz, samples_for(top ? table.duration_top_s : table.duration_bottom_s,
                                                                 rate_hz),
                              table.amplitude, table.ramp_s, rate_hz);
  out.insert(out.end(), p2.begin(), p2.end());
  return out;
}

namespace {

struct Pulse {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
  double freq_hz = 0.0;
};

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t);
  return buf;
}

}  // namespace

GazeDecodeResult decode_gaze(std::span<const double> aux, const GazeCodeTable& table, double rate_hz) {
  if (auto v = table.validate(rate_hz); !v.empty()) throw DataError("invalid gaze code table: " + v.front());
  GazeDecodeResult result;
  double peak = 0.0;
  for (double v : aux) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) return result;

  // Samples above a tenth of the peak form pulses; dips at zero crossings
  // shorter than a quarter period of the lowest code frequency are bridged.
  const double thr = 0.1 * peak;
  const double fmin = std::min({table.freq_left_hz, table.freq_right_hz, table.freq_pulse2_hz});
  const auto bridge = static_cast<std::size_t>(std::max(2.0, std::ceil(rate_hz / (4.0 * fmin))));

  std::vector<Pulse> pulses;
  bool open = false;
  Pulse cur;
  for (std::size_t i = 0; i < aux.size(); ++i) {
    if (std::abs(aux[i]) <= thr) continue;
    if (open && i - cur.last <= bridge) {
      cur.last = i;
    } else {
      if (open) pulses.push_back(cur);
      cur = {i, i, 0.0};
      open = true;
    }
  }
  if (open) pulses.push_back(cur);

  const double candidates[3] = {table.freq_left_hz, table.freq_right_hz, table.freq_pulse2_hz};
  for (auto& p : pulses) {
    const auto seg = aux.subspan(p.first, p.last - p.first + 1);
    double best = -1.0;
    for (double f : candidates) {
      const double pw = goertzel_power(seg, f, rate_hz);
      if (pw > best) {
        best = pw;
        p.freq_hz = f;
      }
    }
  }

  const double split_s = 0.5 * (table.duration_top_s + table.duration_bottom_s);
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    const auto& p = pulses[i];
    const double t = static_cast<double>(p.first) / rate_hz;
    if (p.freq_hz == table.freq_pulse2_hz) {
      result.diagnostics.push_back("unpaired second pulse at " + fmt_time(t) + " s");
      continue;
    }
    const bool has_partner = i + 1 < pulses.size() && pulses[i + 1].freq_hz == table.freq_pulse2_hz &&
                             static_cast<double>(pulses[i + 1].first - p.last) / rate_hz <= table.pair_timeout_s;
    if (!has_partner) {
      result.diagnostics.push_back("first pulse at " + fmt_time(t) + " s has no partner within " +
                                   fmt_time(table.pair_timeout_s) + " s");
      continue;
    }
    const auto& q = pulses[i + 1];
    const double dur2 = static_cast<double>(q.last - q.first + 1) / rate_hz;
    const bool left = p.freq_hz == table.freq_left_hz;
    const bool top = dur2 < split_s;
    GazeDirection d = top ? (left ? GazeDirection::TopLeft : GazeDirection::TopRight)
                          : (left ? GazeDirection::BottomLeft : GazeDirection::BottomRight);
    result.events.push_back({d, t});
    ++i;
  }
  return result;
}

std::filesystem::path sidecar_path(const std::filesystem::path& f32le_path) {
  auto p = f32le_path;
  p.replace_extension(".json");
  return p;
}

void save_stream(const std::filesystem::path& f32le_path, const SampleStream& s) {
  write_f32le(f32le_path, s.samples);
  detail::write_json_file(sidecar_path(f32le_path), {{"sample_rate_hz", s.sample_rate_hz}, {"n_samples", s.samples.size()}});
}

SampleStream load_stream(const std::filesystem::path& f32le_path) {
  SampleStream s;
  s.samples = read_f32le(f32le_path);
  const auto side = sidecar_path(f32le_path);
  if (std::filesystem::exists(side)) {
    const auto j = detail::read_json_file(side);
    s.sample_rate_hz = detail::field<double>(j, "sample_rate_hz", side.string());
    const auto n = detail::field<std::size_t>(j, "n_samples", side.string());
    if (n != s.samples.size())
      throw DataError(side.string() + " declares " + std::to_string(n) + " samples but the stream holds " +
                      std::to_string(s.samples.size()));
  }
  return s;
}

}  // namespace gazetrace
