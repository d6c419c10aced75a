#include "gazetrace/session.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gazetrace/errors.hpp"
#include "json_util.hpp"

namespace gazetrace {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& eeg_labels() {
  static const std::vector<std::string> labels = {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
                                                  "C4",  "T4",  "T5", "P3", "Pz", "P4", "T6", "O1", "O2"};
  return labels;
}

const std::vector<std::string>& canonical_labels() {
  static const std::vector<std::string> labels = [] {
    auto l = eeg_labels();
    l.push_back(kAux1);
    l.push_back(kAux2);
    return l;
  }();
  return labels;
}

bool is_aux_label(std::string_view label) { return label.starts_with("AUX"); }

Recording Recording::canonical(std::size_t n_samples, double rate_hz) {
  Recording r;
  r.sample_rate_hz = rate_hz;
  r.channels = canonical_labels();
  r.data = Matrix(r.channels.size(), n_samples);
  return r;
}

std::optional<std::size_t> Recording::channel_index(std::string_view label) const {
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (channels[i] == label) return i;
  return std::nullopt;
}

std::size_t Recording::require_channel(std::string_view label) const {
  if (auto i = channel_index(label)) return *i;
  throw DataError("recording has no channel '" + std::string(label) + "'");
}

std::vector<std::string> Recording::eeg_channels() const {
  std::vector<std::string> out;
  for (const auto& c : channels)
    if (!is_aux_label(c)) out.push_back(c);
  return out;
}

namespace {

constexpr std::array<std::pair<GazeDirection, std::string_view>, 5> kDirectionNames = {{
    {GazeDirection::TopLeft, "TopLeft"},
    {GazeDirection::TopRight, "TopRight"},
    {GazeDirection::BottomLeft, "BottomLeft"},
    {GazeDirection::BottomRight, "BottomRight"},
    {GazeDirection::Unknown, "Unknown"},
}};

constexpr std::array<std::pair<EventSource, std::string_view>, 5> kSourceNames = {{
    {EventSource::Script, "Script"},
    {EventSource::DecodedAudio, "DecodedAudio"},
    {EventSource::DecodedAux1, "DecodedAux1"},
    {EventSource::DecodedAux2, "DecodedAux2"},
    {EventSource::Network, "Network"},
}};

}  // namespace

std::string_view to_string(GazeDirection d) {
  for (const auto& [k, v] : kDirectionNames)
    if (k == d) return v;
  return "Unknown";
}

std::string_view to_string(EventSource s) {
  for (const auto& [k, v] : kSourceNames)
    if (k == s) return v;
  return "Script";
}

std::optional<GazeDirection> parse_gaze_direction(std::string_view s) {
  for (const auto& [k, v] : kDirectionNames)
    if (v == s) return k;
  return std::nullopt;
}

std::optional<EventSource> parse_event_source(std::string_view s) {
  for (const auto& [k, v] : kSourceNames)
    if (v == s) return k;
  return std::nullopt;
}

std::vector<std::string> validate_recording(const Recording& rec) {
  constexpr std::size_t kMaxPerChannel = 10;
  std::vector<std::string> out;
  if (!(rec.sample_rate_hz > 0.0) || !std::isfinite(rec.sample_rate_hz))
    out.push_back("sample rate " + std::to_string(rec.sample_rate_hz) + " Hz is not positive");
  if (rec.data.rows() != rec.channels.size()) {
    out.push_back("data has " + std::to_string(rec.data.rows()) + " rows but " + std::to_string(rec.channels.size()) +
                  " channel labels");
  }
  std::map<std::string, int> seen;
  for (const auto& c : rec.channels) ++seen[c];
  for (const auto& [label, count] : seen)
    if (count > 1) out.push_back("duplicate channel label '" + label + "' (" + std::to_string(count) + " times)");

  const std::size_t rows = std::min(rec.data.rows(), rec.channels.size());
  for (std::size_t c = 0; c < rows; ++c) {
    std::size_t bad = 0;
    const auto row = rec.data.row(c);
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double v = row[i];
      if (std::isfinite(v) && std::abs(v) <= kAmplitudeBoundUv) continue;
      if (bad < kMaxPerChannel) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "channel '%s' sample %zu: value %g uV outside +/-%g uV", rec.channels[c].c_str(),
                      i, v, kAmplitudeBoundUv);
        out.emplace_back(buf);
      }
      ++bad;
    }
    if (bad > kMaxPerChannel)
      out.push_back("channel '" + rec.channels[c] + "': " + std::to_string(bad - kMaxPerChannel) +
                    " more out-of-range samples");
  }
  return out;
}

std::vector<std::string> validate_session_structure(const Session& s) {
  std::vector<std::string> out;
  for (auto& v : validate_recording(s.recording))
    if (v.find("outside") == std::string::npos && v.find("more out-of-range") == std::string::npos)
      out.push_back(std::move(v));
  const double duration = s.recording.sample_rate_hz > 0 ? s.recording.duration_s() : 0.0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    if (e.code < 0) out.push_back("event " + std::to_string(i) + ": negative code");
    if (!(e.onset_s >= 0.0) || !std::isfinite(e.onset_s)) out.push_back("event " + std::to_string(i) + ": onset < 0");
  }
  constexpr double kEps = 1e-9;
  std::vector<GazeInterval> sorted = s.gaze;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.t0_s < b.t0_s; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& g = sorted[i];
    if (!(g.t0_s < g.t1_s)) out.push_back("gaze interval " + std::to_string(i) + ": t0 >= t1");
    if (g.t0_s < -kEps || g.t1_s > duration + kEps)
      out.push_back("gaze interval " + std::to_string(i) + " outside [0, " + std::to_string(duration) + "] s");
    if (i > 0 && g.t0_s < sorted[i - 1].t1_s - kEps)
      out.push_back("gaze intervals " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap");
  }
  return out;
}

void write_f32le(const fs::path& path, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> read_f32le(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0)
    throw DataError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 4 bytes");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

namespace {

void write_csv(const fs::path& path, const Recording& rec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < rec.channels.size(); ++c) out << (c ? "," : "") << rec.channels[c];
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < rec.n_samples(); ++i) {
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.6g", rec.data(c, i));
      if (c) out << ',';
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Matrix read_csv(const fs::path& path, std::size_t n_channels, std::size_t n_samples) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  const auto header_cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (n_channels != header_cols && !(n_channels == 0 && line.empty()))
    throw DataError(path.string() + ": manifest declares " + std::to_string(n_channels) + " channels but CSV has " +
                    std::to_string(header_cols) + " columns");
  Matrix m(n_channels, n_samples);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= n_samples)
      throw DataError(path.string() + ": more than the declared " + std::to_string(n_samples) + " samples");
    std::size_t col = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end && col < n_channels) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma)
        throw DataError(path.string() + ": bad number at sample " + std::to_string(row) + " column " +
                        std::to_string(col));
      m(col, row) = v;
      ++col;
      p = comma + 1;
    }
    if (col != n_channels || p <= end)
      throw DataError(path.string() + ": sample row " + std::to_string(row) + " has the wrong column count");
    ++row;
  }
  if (row != n_samples)
    throw DataError(path.string() + ": manifest declares " + std::to_string(n_samples) + " samples but CSV has " +
                    std::to_string(row));
  return m;
}

}  // namespace

void save_session(const Session& s, const fs::path& dir, DataEncoding encoding) {
  if (auto problems = validate_session_structure(s); !problems.empty())
    throw DataError("invalid session: " + problems.front());
  detail::ensure_directory(dir);
  const auto& rec = s.recording;

  json manifest = {
      {"format_version", kSessionFormatVersion},
      {"sample_rate_hz", rec.sample_rate_hz},
      {"channels", rec.channels},
      {"n_samples", rec.n_samples()},
      {"data_encoding", encoding == DataEncoding::F32le ? "f32le" : "csv"},
      {"subject", s.manifest.subject},
      {"start_time_ns", rec.start_time_ns},
      {"codec_digest", s.manifest.codec_digest},
  };
  detail::write_json_file(dir / "manifest.json", manifest);

  if (encoding == DataEncoding::F32le) {
    write_f32le(dir / "data.f32le", rec.data.data());
  } else {
    write_csv(dir / "data.csv", rec);
  }

  std::vector<EventMarker> events = s.events;
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
  json ev = json::array();
  for (const auto& e : events) {
    json j = {{"code", e.code}, {"onset_s", e.onset_s}, {"source", to_string(e.source)}};
    if (e.raw_receive_time_ns) j["raw_receive_time_ns"] = *e.raw_receive_time_ns;
    ev.push_back(std::move(j));
  }
  detail::write_json_file(dir / "events.json", ev);

  json gz = json::array();
  for (const auto& g : s.gaze) gz.push_back({{"t0_s", g.t0_s}, {"t1_s", g.t1_s}, {"direction", to_string(g.direction)}});
  detail::write_json_file(dir / "gaze.json", gz);
}

Session load_session(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("session directory not found: " + dir.string());
  const auto mpath = dir / "manifest.json";
  const json manifest = detail::read_json_file(mpath);
  const std::string where = mpath.string();
  if (detail::field<int>(manifest, "format_version", where) != kSessionFormatVersion)
    throw DataError(where + ": unsupported format_version");

  Session s;
  auto& rec = s.recording;
  rec.sample_rate_hz = detail::field<double>(manifest, "sample_rate_hz", where);
  rec.channels = detail::field<std::vector<std::string>>(manifest, "channels", where);
  const auto n_samples = detail::field<std::size_t>(manifest, "n_samples", where);
  const auto encoding = detail::field<std::string>(manifest, "data_encoding", where);
  s.manifest.subject = detail::field<std::string>(manifest, "subject", where);
  rec.start_time_ns = detail::field<std::int64_t>(manifest, "start_time_ns", where);
  s.manifest.codec_digest = detail::field<std::string>(manifest, "codec_digest", where);

  const std::size_t n_channels = rec.channels.size();
  if (encoding == "f32le") {
    const auto values = read_f32le(dir / "data.f32le");
    if (values.size() != n_channels * n_samples) {
      std::string detail = std::to_string(values.size()) + " floats";
      if (n_samples > 0 && values.size() % n_samples == 0)
        detail += " (" + std::to_string(values.size() / n_samples) + " rows)";
      throw DataError("channel/sample count mismatch: manifest declares " + std::to_string(n_channels) +
                      " channels x " + std::to_string(n_samples) + " samples but data.f32le holds " + detail);
    }
    rec.data = Matrix(n_channels, n_samples);
    std::copy(values.begin(), values.end(), rec.data.data().begin());
  } else if (encoding == "csv") {
    rec.data = read_csv(dir / "data.csv", n_channels, n_samples);
  } else {
    throw DataError(where + ": unknown data_encoding '" + encoding + "'");
  }

  const auto epath = dir / "events.json";
  const json ev = detail::read_json_file(epath);
  if (!ev.is_array()) throw DataError(epath.string() + ": expected an array");
  for (const auto& j : ev) {
    EventMarker e;
    e.code = detail::field<int>(j, "code", epath.string());
    e.onset_s = detail::field<double>(j, "onset_s", epath.string());
    const auto src = detail::field<std::string>(j, "source", epath.string());
    const auto parsed = parse_event_source(src);
    if (!parsed) throw DataError(epath.string() + ": unknown event source '" + src + "'");
    e.source = *parsed;
    if (j.contains("raw_receive_time_ns") && !j["raw_receive_time_ns"].is_null())
      e.raw_receive_time_ns = detail::field<std::int64_t>(j, "raw_receive_time_ns", epath.string());
    s.events.push_back(e);
  }
  std::stable_sort(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });

  const auto gpath = dir / "gaze.json";
  const json gz = detail::read_json_file(gpath);
  if (!gz.is_array()) throw DataError(gpath.string() + ": expected an array");
  for (const auto& j : gz) {
    GazeInterval g;
    g.t0_s = detail::field<double>(j, "t0_s", gpath.string());
    g.t1_s = detail::field<double>(j, "t1_s", gpath.string());
    const auto name = detail::field<std::string>(j, "direction", gpath.string());
    const auto d = parse_gaze_direction(name);
    if (!d) throw DataError(gpath.string() + ": unknown direction '" + name + "'");
    g.direction = *d;
    s.gaze.push_back(g);
  }

  if (auto problems = validate_session_structure(s); !problems.empty())
    throw DataError("invalid session in " + dir.string() + ": " + problems.front());
  return s;
}

}  // namespace gazetrace
