#include "gazetrace/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gazetrace/bands.hpp"
#include "gazetrace/eigen.hpp"
#include "gazetrace/errors.hpp"
#include "gazetrace/kernels.hpp"
#include "gazetrace/marker_codec.hpp"
#include "json_util.hpp"

namespace gazetrace {

using nlohmann::json;

namespace {

constexpr std::size_t kSourcesPerBand = 2;
constexpr double kBlinkTemplateS = 0.300;
constexpr double kMinBlinkSeparationS = 0.5;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

std::size_t samples_for(double seconds, double rate) {
  return static_cast<std::size_t>(std::floor(seconds * rate + 1e-9));
}

Signature normalized(const Signature& s) {
  double n = 0.0;
  for (double v : s) n += v * v;
  n = std::sqrt(n);
  Signature out{};
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = n > 0.0 ? s[i] / n : 0.0;
  return out;
}

// Blink loading: Fp1/Fp2 full, F7/F8 half.
std::vector<double> blink_loading(const std::vector<std::string>& labels) {
  std::vector<double> col(labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == "Fp1" || labels[i] == "Fp2") col[i] = 1.0;
    if (labels[i] == "F7" || labels[i] == "F8") col[i] = 0.5;
  }
  return col;
}

}  // namespace

std::map<std::string, Signature> SynthSpec::default_signatures() {
  // Two planted factors: left/right moves delta, theta (opposite sign) and
  // gamma; top/bottom moves alpha and beta (opposite sign).
  constexpr double a = 0.8;
  auto sig = [&](double lr, double tb) {
    return Signature{1.0 + a * lr, 1.0 - a * lr, 1.0 + a * tb, 1.0 - a * tb, 1.0 + a * lr};
  };
  // The untrained "Bottom" keeps the bottom alpha/beta pattern with every
  // left/right band low, which no quadrant does. A plain midpoint of the two
  // bottom quadrants would sit closer than 0.5 to each after normalization.
  return {
      {"TopLeft", sig(-1, +1)},
      {"TopRight", sig(+1, +1)},
      {"BottomLeft", sig(-1, -1)},
      {"BottomRight", sig(+1, -1)},
      {"Bottom", {1.0 - a, 1.0 - a, 1.0 - a, 1.0 + a, 1.0 - a}},
  };
}

SynthSpec SynthSpec::defaults() {
  SynthSpec s;
  s.signature_map = default_signatures();
  for (auto d : kTrainableDirections) s.directions.push_back({std::string(to_string(d)), 60.0});
  return s;
}

std::vector<std::string> SynthSpec::validate() const {
  std::vector<std::string> out;
  if (directions.empty()) out.push_back("no direction segments");
  for (const auto& seg : directions) {
    if (!(seg.duration_s > 0.0)) out.push_back("segment '" + seg.label + "' has non-positive duration");
    if (!signature_map.contains(seg.label)) out.push_back("segment label '" + seg.label + "' has no signature");
  }
  for (const auto& [name, sig] : signature_map)
    for (double v : sig)
      if (!(v > 0.0)) out.push_back("signature '" + name + "' has a non-positive band weight");
  for (auto i = signature_map.begin(); i != signature_map.end(); ++i) {
    for (auto j = std::next(i); j != signature_map.end(); ++j) {
      const auto a = normalized(i->second);
      const auto b = normalized(j->second);
      double d = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
      if (std::sqrt(d) < 0.5)
        out.push_back("signatures '" + i->first + "' and '" + j->first + "' are closer than 0.5 after normalization");
    }
  }
  if (blink_rate_per_min < 0.0) out.push_back("blink rate is negative");
  if (noise_rms_uv < 0.0) out.push_back("noise RMS is negative");
  if (!(blink_amplitude_uv > 3.0 * noise_rms_uv)) out.push_back("blink amplitude must exceed 3x noise RMS");
  if (!(mixing_condition_max >= 1.0)) out.push_back("mixing_condition_max must be >= 1");
  if (!(band_rms_uv > 0.0)) out.push_back("band_rms_uv must be positive");
  if (!(sample_rate_hz > 0.0)) out.push_back("sample rate must be positive");
  return out;
}

json to_json(const SynthSpec& spec) {
  json dirs = json::array();
  for (const auto& s : spec.directions) dirs.push_back({{"label", s.label}, {"duration_s", s.duration_s}});
  json sigs = json::object();
  for (const auto& [name, sig] : spec.signature_map) sigs[name] = sig;
  return {
      {"seed", spec.seed},
      {"directions", dirs},
      {"signature_map", sigs},
      {"blink_rate_per_min", spec.blink_rate_per_min},
      {"blink_amplitude_uv", spec.blink_amplitude_uv},
      {"noise_rms_uv", spec.noise_rms_uv},
      {"mixing_condition_max", spec.mixing_condition_max},
      {"band_rms_uv", spec.band_rms_uv},
      {"sample_rate_hz", spec.sample_rate_hz},
  };
}

SynthSpec synth_spec_from_json(const json& j) {
  if (!j.is_object()) throw DataError("synth spec must be a JSON object");
  SynthSpec s = SynthSpec::defaults();
  const std::string where = "synth spec";
  if (j.contains("seed")) s.seed = detail::field<std::uint64_t>(j, "seed", where);
  if (j.contains("directions")) {
    s.directions.clear();
    for (const auto& d : j["directions"]) {
      SynthSegment seg;
      seg.label = d.contains("label") ? detail::field<std::string>(d, "label", where)
                                      : detail::field<std::string>(d, "direction", where);
      seg.duration_s = detail::field<double>(d, "duration_s", where);
      s.directions.push_back(seg);
    }
  }
  if (j.contains("signature_map")) {
    for (const auto& [name, v] : j["signature_map"].items()) {
      if (!v.is_array() || v.size() != kSignatureBands)
        throw DataError("signature '" + name + "' must have " + std::to_string(kSignatureBands) + " band weights");
      s.signature_map[name] = v.get<Signature>();
    }
  }
  auto opt = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = detail::field<double>(j, key, where);
  };
  opt("blink_rate_per_min", s.blink_rate_per_min);
  opt("blink_amplitude_uv", s.blink_amplitude_uv);
  opt("noise_rms_uv", s.noise_rms_uv);
  opt("mixing_condition_max", s.mixing_condition_max);
  opt("band_rms_uv", s.band_rms_uv);
  opt("sample_rate_hz", s.sample_rate_hz);
  return s;
}

BlinkTrain gen_blink(double rate_hz, double duration_s, std::uint64_t seed, double sample_rate_hz) {
  BlinkTrain out;
  const std::size_t len = samples_for(kBlinkTemplateS, sample_rate_hz);
  const std::size_t half = len / 2;
  out.waveform.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    const bool first = i < half;
    const std::size_t m = first ? half : len - half;
    const double x = static_cast<double>(first ? i : i - half) + 0.5;
    const double lobe = std::pow(std::sin(std::numbers::pi * x / static_cast<double>(m)), 2);
    out.waveform[i] = first ? lobe : -0.7 * lobe;
  }
  const double peak = *std::max_element(out.waveform.begin(), out.waveform.end());
  for (double& v : out.waveform) v /= peak;

  if (!(rate_hz > 0.0) || !(duration_s > 0.0)) return out;
  auto rng = stream_rng(seed, 0xB11Cu);
  const double mean_gap = 1.0 / rate_hz;
  const double extra = std::max(mean_gap - kMinBlinkSeparationS, 1e-9);
  std::exponential_distribution<double> gap(1.0 / extra);
  double t = 0.0;
  for (;;) {
    t += kMinBlinkSeparationS + gap(rng);
    if (t + kBlinkTemplateS > duration_s) break;
    out.times_s.push_back(t);
  }
  return out;
}

SynthOutput gen_session(const SynthSpec& spec) {
  if (auto v = spec.validate(); !v.empty()) throw DataError("invalid synth spec: " + v.front());
  const double rate = spec.sample_rate_hz;
  const auto& labels = eeg_labels();
  const std::size_t n_ch = labels.size();

  std::vector<std::size_t> seg_start;
  std::size_t n = 0;
  for (const auto& seg : spec.directions) {
    seg_start.push_back(n);
    n += samples_for(seg.duration_s, rate);
  }
  seg_start.push_back(n);

  // Sources: two per band, each owning a disjoint subset of the band's
  // integer-Hz frequencies, so sources stay orthogonal over 1 s windows.
  const auto bands = default_bands();
  struct Source {
    std::size_t band;
    std::vector<double> freqs;
  };
  std::vector<Source> sources;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    std::vector<double> freqs;
    for (double f = std::max(1.0, std::ceil(bands[b].lo_hz)); f < bands[b].hi_hz && f < rate / 2.0; f += 1.0)
      freqs.push_back(f);
    const std::size_t ns = std::min(kSourcesPerBand, freqs.size());
    const std::size_t first = sources.size();
    for (std::size_t j = 0; j < ns; ++j) sources.push_back({b, {}});
    for (std::size_t i = 0; i < freqs.size(); ++i) sources[first + i % ns].freqs.push_back(freqs[i]);
  }
  const std::size_t n_src = sources.size();

  auto phase_rng = stream_rng(spec.seed, 1);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double band_power = spec.band_rms_uv * spec.band_rms_uv;
  Matrix src(n_src, n);
  for (std::size_t j = 0; j < n_src; ++j) {
    const auto& s = sources[j];
    const double amp = std::sqrt(2.0 * band_power / static_cast<double>(s.freqs.size()));
    std::vector<double> phases(s.freqs.size());
    for (double& p : phases) p = phase_dist(phase_rng);
    auto row = src.row(j);
    for (std::size_t seg = 0; seg < spec.directions.size(); ++seg) {
      const double gain = std::sqrt(spec.signature_map.at(spec.directions[seg].label)[s.band]);
      for (std::size_t i = seg_start[seg]; i < seg_start[seg + 1]; ++i) {
        const double t = static_cast<double>(i) / rate;
        double v = 0.0;
        for (std::size_t k = 0; k < s.freqs.size(); ++k)
          v += std::sin(2.0 * std::numbers::pi * s.freqs[k] * t + phases[k]);
        row[i] = gain * amp * v;
      }
    }
  }

  // Mixing with per-(channel, band) unit norm; redrawn until well conditioned.
  auto mix_rng = stream_rng(spec.seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix mixing;
  double condition = 0.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100) throw DataError("could not draw a mixing matrix within the condition bound");
    mixing = Matrix(n_ch, n_src);
    for (std::size_t c = 0; c < n_ch; ++c) {
      for (std::size_t b = 0; b < bands.size(); ++b) {
        double norm = 0.0;
        for (std::size_t j = 0; j < n_src; ++j)
          if (sources[j].band == b) {
            mixing(c, j) = normal(mix_rng);
            norm += mixing(c, j) * mixing(c, j);
          }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < n_src; ++j)
          if (sources[j].band == b) mixing(c, j) /= norm;
      }
    }
    const auto eig = eigen_symmetric(mixing.transposed() * mixing);
    const double lmin = eig.values.back();
    condition = lmin > 0.0 ? std::sqrt(eig.values.front() / lmin) : INFINITY;
    if (condition <= spec.mixing_condition_max) break;
  }

  SynthOutput out;
  auto& truth = out.truth;
  truth.eeg_mixing = mixing;
  truth.mixing_condition = condition;
  truth.clean = kernels::omp::matmul(mixing, src);

  truth.blink.assign(n, 0.0);
  truth.blink_column.assign(n_ch, 0.0);
  if (spec.blink_rate_per_min > 0.0) {
    const auto train = gen_blink(spec.blink_rate_per_min / 60.0, static_cast<double>(n) / rate, spec.seed, rate);
    truth.blink_times_s = train.times_s;
    truth.blink_column = blink_loading(labels);
    for (double t : train.times_s) {
      const auto start = static_cast<std::size_t>(std::llround(t * rate));
      for (std::size_t i = 0; i < train.waveform.size() && start + i < n; ++i)
        truth.blink[start + i] += spec.blink_amplitude_uv * train.waveform[i];
    }
  }

  truth.noise = Matrix(n_ch, n);
  if (spec.noise_rms_uv > 0.0) {
    auto noise_rng = stream_rng(spec.seed, 3);
    std::normal_distribution<double> nd(0.0, spec.noise_rms_uv);
    for (double& v : truth.noise.data()) v = nd(noise_rng);
  }

  auto& session = out.session;
  auto& rec = session.recording;
  rec = Recording::canonical(n, rate);
  for (std::size_t c = 0; c < n_ch; ++c)
    for (std::size_t i = 0; i < n; ++i)
      rec.data(c, i) =
          static_cast<float>(truth.clean(c, i) + truth.blink_column[c] * truth.blink[i] + truth.noise(c, i));

  const GazeCodeTable table;
  const std::size_t aux2 = rec.require_channel(kAux2);
  for (std::size_t seg = 0; seg < spec.directions.size(); ++seg) {
    const double t0 = static_cast<double>(seg_start[seg]) / rate;
    const double t1 = static_cast<double>(seg_start[seg + 1]) / rate;
    const auto dir = parse_gaze_direction(spec.directions[seg].label).value_or(GazeDirection::Unknown);
    session.gaze.push_back({t0, t1, dir});
    if (dir == GazeDirection::Unknown) continue;
    const auto code = encode_gaze(dir, table, rate);
    if (seg_start[seg] + code.size() > seg_start[seg + 1]) continue;
    for (std::size_t i = 0; i < code.size(); ++i)
      rec.data(aux2, seg_start[seg] + i) = static_cast<float>(code[i] * kAuxFullScaleUv);
  }

  const auto per_window = static_cast<std::size_t>(std::llround(rate));
  for (std::size_t w = 0; w * per_window < n; ++w) {
    const std::size_t at = w * per_window;
    std::size_t seg = 0;
    while (seg + 1 < spec.directions.size() && at >= seg_start[seg + 1]) ++seg;
    truth.window_truth.push_back(spec.directions[seg].label);
  }

  session.manifest.subject = "synth-" + std::to_string(spec.seed);
  session.manifest.codec_digest = CodecConfig::audio_default().digest();
  return out;
}

void save_truth(const GroundTruth& truth, const SynthSpec& spec, const std::filesystem::path& dir) {
  detail::ensure_directory(dir);
  json column = json::object();
  const auto& labels = eeg_labels();
  for (std::size_t i = 0; i < labels.size() && i < truth.blink_column.size(); ++i)
    column[labels[i]] = truth.blink_column[i];
  json j = {
      {"spec", to_json(spec)},
      {"channels", labels},
      {"n_samples", truth.clean.cols()},
      {"clean_encoding", "f32le"},
      {"blink_times_s", truth.blink_times_s},
      {"blink_amplitude_uv", spec.blink_amplitude_uv},
      {"blink_template", gen_blink(0.0, 0.0, 0, spec.sample_rate_hz).waveform},
      {"blink_column", column},
      {"window_truth", truth.window_truth},
      {"mixing_condition", truth.mixing_condition},
  };
  detail::write_json_file(dir / "truth.json", j);
  write_f32le(dir / "clean.f32le", truth.clean.data());
}

}  // namespace gazetrace
