#include "gazetrace/preprocess.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

#include "gazetrace/eigen.hpp"
#include "gazetrace/errors.hpp"
#include "gazetrace/kernels.hpp"

namespace gazetrace {

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalised to 1
};

Biquad design(BiquadKind kind, double cutoff_hz, double rate_hz) {
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  if (kind == BiquadKind::Lowpass) {
    const double b = (1.0 - c) / 2.0;
    return {b / a0, 2.0 * b / a0, b / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
  }
  const double b = (1.0 + c) / 2.0;
  return {b / a0, -2.0 * b / a0, b / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
}

// Transposed direct form II, state initialised to the steady state for a
// constant input equal to x[0].
void run_biquad(const Biquad& f, std::vector<double>& x) {
  if (x.empty()) return;
  const double gain = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
  const double x0 = x.front();
  const double y0 = gain * x0;
  double z2 = f.b2 * x0 - f.a2 * y0;
  double z1 = f.b1 * x0 - f.a1 * y0 + z2;
  for (double& v : x) {
    const double in = v;
    const double out = f.b0 * in + z1;
    z1 = f.b1 * in - f.a1 * out + z2;
    z2 = f.b2 * in - f.a2 * out;
    v = out;
  }
}

std::string channel_name(const std::vector<std::string>& labels, std::size_t i) {
  return i < labels.size() ? labels[i] : "row " + std::to_string(i);
}

// FFTW planning is not thread safe.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<double> filtfilt_butter2(std::span<const double> x, BiquadKind kind, double cutoff_hz, double rate_hz) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < rate_hz / 2.0))
    throw DataError("filter cutoff " + std::to_string(cutoff_hz) + " Hz is outside (0, Nyquist)");
  const std::size_t n = x.size();
  if (n == 0) return {};
  const Biquad f = design(kind, cutoff_hz, rate_hz);
  // Odd extension covering a few time constants of the section.
  const auto wanted = static_cast<std::size_t>(std::ceil(3.0 * rate_hz / cutoff_hz));
  const std::size_t pad = std::min(n - 1, std::max<std::size_t>(wanted, 6));
  std::vector<double> buf;
  buf.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) buf.push_back(2.0 * x[0] - x[i]);
  buf.insert(buf.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) buf.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
  run_biquad(f, buf);
  std::reverse(buf.begin(), buf.end());
  run_biquad(f, buf);
  std::reverse(buf.begin(), buf.end());
  return {buf.begin() + static_cast<std::ptrdiff_t>(pad), buf.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

Recording bandpass(const Recording& rec, double lo_hz, double hi_hz) {
  const double nyq = rec.sample_rate_hz / 2.0;
  if (!(lo_hz > 0.0) || !(lo_hz < hi_hz) || !(hi_hz < nyq))
    throw DataError("band-pass band [" + std::to_string(lo_hz) + ", " + std::to_string(hi_hz) +
                    "] Hz must satisfy 0 < lo < hi < " + std::to_string(nyq) + " Hz");
  Recording out = rec;
  for (std::size_t c = 0; c < rec.n_channels(); ++c) {
    if (is_aux_label(rec.channels[c])) continue;
    auto y = filtfilt_butter2(rec.data.row(c), BiquadKind::Highpass, lo_hz, rec.sample_rate_hz);
    y = filtfilt_butter2(y, BiquadKind::Lowpass, hi_hz, rec.sample_rate_hz);
    std::copy(y.begin(), y.end(), out.data.row(c).begin());
  }
  return out;
}

Whitened whiten(const Matrix& x, std::size_t k, const std::vector<std::string>& labels) {
  const std::size_t c = x.rows();
  const std::size_t n = x.cols();
  if (k == 0) k = c;
  if (c == 0) throw DataError("cannot whiten an empty matrix");
  if (k > c) throw DataError("requested " + std::to_string(k) + " components from " + std::to_string(c) + " channels");
  if (n <= c) throw DataError("whitening needs more samples (" + std::to_string(n) + ") than channels (" +
                              std::to_string(c) + ")");
  Whitened w;
  w.means = row_means(x);
  Matrix centered = x;
  for (std::size_t r = 0; r < c; ++r) {
    auto row = centered.row(r);
    bool constant = true;
    for (double& v : row) {
      v -= w.means[r];
      if (v != 0.0) constant = false;
    }
    if (constant) throw DataError("channel " + channel_name(labels, r) + " is constant");
  }
  Matrix cov = kernels::omp::matmul_abt(centered, centered);
  for (double& v : cov.data()) v /= static_cast<double>(n);
  const auto eig = eigen_symmetric(cov);
  const double lmax = eig.values.front();
  if (!(eig.values[k - 1] > 1e-10 * lmax)) {
    // The null direction is dominated by the channels that cancel each other.
    const std::size_t j = k - 1;
    std::size_t a = 0, b = 1;
    std::vector<std::size_t> idx(c);
    for (std::size_t i = 0; i < c; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t p, std::size_t q) {
      return std::abs(eig.vectors(p, j)) > std::abs(eig.vectors(q, j));
    });
    a = std::min(idx[0], idx[1]);
    b = std::max(idx[0], idx[1]);
    throw DataError("rank-deficient channel covariance: channels " + channel_name(labels, a) + " and " +
                    channel_name(labels, b) + " are linearly dependent");
  }
  w.whitening = Matrix(k, c);
  for (std::size_t i = 0; i < k; ++i) {
    const double s = 1.0 / std::sqrt(eig.values[i]);
    for (std::size_t ch = 0; ch < c; ++ch) w.whitening(i, ch) = s * eig.vectors(ch, i);
  }
  w.z = kernels::omp::matmul(w.whitening, centered);
  w.eigenvalues = eig.values;
  w.eigenvectors = eig.vectors;
  return w;
}

IcaDecomposition fastica(const Matrix& x, std::size_t k, const IcaConfig& cfg, std::vector<std::string> labels) {
  const std::size_t c = x.rows();
  if (k < 1 || k > c)
    throw DataError("component count " + std::to_string(k) + " must lie in [1, " + std::to_string(c) + "]");
  if (!labels.empty() && labels.size() != c) throw DataError("label count does not match channel count");
  if (cfg.max_iter < 1) throw DataError("max_iter must be positive");
  const Whitened wt = whiten(x, k, labels);
  const Matrix& z = wt.z;
  const auto n = static_cast<double>(z.cols());

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x1CAu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(k, k);
  for (double& v : w.data()) v = normal(rng);
  w = inverse_sqrt_symmetric(multiply_abt(w, w)) * w;

  IcaDecomposition dec;
  Matrix g;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const Matrix y = kernels::omp::matmul(w, z);
    const auto gprime = kernels::omp::tanh_contrast(y, g);
    Matrix next = kernels::omp::matmul_abt(g, z);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) next(i, j) = next(i, j) / n - gprime[i] * w(i, j);
    next = inverse_sqrt_symmetric(multiply_abt(next, next)) * next;
    double worst = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < k; ++j) d += next(i, j) * w(i, j);
      worst = std::min(worst, std::abs(d));
    }
    w = std::move(next);
    dec.iterations = it;
    if (worst > 1.0 - cfg.tol) {
      dec.converged = true;
      break;
    }
  }

  // mixing = E_k D_k^(1/2) W^T, i.e. the pseudo-inverse of W * whitening.
  Matrix dewhite(c, k);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < k; ++i) dewhite(ch, i) = wt.eigenvectors(ch, i) * std::sqrt(wt.eigenvalues[i]);
  Matrix mixing = multiply_abt(dewhite, w);
  Matrix unmixing = w * wt.whitening;

  std::vector<double> sign(k, 1.0), norm(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    double best = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = mixing(ch, i);
      norm[i] += v * v;
      if (std::abs(v) > std::abs(best)) best = v;
    }
    if (best < 0.0) sign[i] = -1.0;
  }
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  if (cfg.sort_by_mixing_norm)
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norm[a] > norm[b]; });

  dec.mixing = Matrix(c, k);
  dec.unmixing = Matrix(k, c);
  for (std::size_t out = 0; out < k; ++out) {
    const std::size_t i = order[out];
    for (std::size_t ch = 0; ch < c; ++ch) {
      dec.mixing(ch, out) = sign[i] * mixing(ch, i);
      dec.unmixing(out, ch) = sign[i] * unmixing(i, ch);
    }
  }
  dec.whitening = wt.whitening;
  dec.channel_means = wt.means;
  dec.channel_labels = std::move(labels);
  Matrix centered = x;
  for (std::size_t r = 0; r < c; ++r)
    for (double& v : centered.row(r)) v -= dec.channel_means[r];
  dec.sources = kernels::omp::matmul(dec.unmixing, centered);
  return dec;
}

std::vector<double> periodogram(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t bins = n / 2 + 1;
  std::vector<double> in(x.begin(), x.end());
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> p(bins);
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    p[k] = (edge ? 1.0 : 2.0) * (out[k][0] * out[k][0] + out[k][1] * out[k][1]) * scale;
  }
  {
    std::lock_guard lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(out);
  return p;
}

std::vector<ComponentScore> score_components(const IcaDecomposition& dec, double rate_hz, const ScoreConfig& cfg) {
  const std::size_t k = dec.sources.rows();
  const std::size_t c = dec.mixing.rows();
  const std::size_t n = dec.sources.cols();
  std::vector<bool> frontal(c, false);
  for (std::size_t ch = 0; ch < c && ch < dec.channel_labels.size(); ++ch)
    frontal[ch] = std::find(cfg.frontal.begin(), cfg.frontal.end(), dec.channel_labels[ch]) != cfg.frontal.end();

  std::vector<ComponentScore> scores(k);
  std::vector<double> peak_to_rms(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    auto& s = scores[i];
    s.component_index = i;
    const auto src = dec.sources.row(i);
    const auto p = periodogram(src);
    double low = 0.0, total = 0.0;
    for (std::size_t b = 0; b < p.size(); ++b) {
      const double f = static_cast<double>(b) * rate_hz / static_cast<double>(n);
      total += p[b];
      if (f < cfg.lowfreq_hz) low += p[b];
    }
    s.lowfreq_fraction = total > 0.0 ? low / total : 0.0;

    double mass = 0.0, front = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = std::abs(dec.mixing(ch, i));
      mass += v;
      if (frontal[ch]) front += v;
    }
    s.frontal_fraction = mass > 0.0 ? front / mass : 0.0;

    double peak = 0.0, sq = 0.0;
    for (double v : src) {
      peak = std::max(peak, std::abs(v));
      sq += v * v;
    }
    const double rms = n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    peak_to_rms[i] = rms > 0.0 ? peak / rms : 0.0;
  }
  std::vector<double> sorted = peak_to_rms;
  std::sort(sorted.begin(), sorted.end());
  double median = 0.0;
  if (!sorted.empty())
    median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                               : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  for (std::size_t i = 0; i < k; ++i) {
    auto& s = scores[i];
    s.amplitude_ratio = median > 0.0 ? peak_to_rms[i] / median : 0.0;
    s.combined = (s.lowfreq_fraction + s.frontal_fraction + std::min(s.amplitude_ratio / 3.0, 1.0)) / 3.0;
  }
  return scores;
}

Matrix reconstruct(const IcaDecomposition& dec, const std::set<std::size_t>& flagged) {
  const std::size_t k = dec.mixing.cols();
  for (std::size_t f : flagged)
    if (f >= k)
      throw DataError("flagged component " + std::to_string(f) + " out of range (" + std::to_string(k) +
                      " components)");
  Matrix mixing = dec.mixing;
  for (std::size_t f : flagged)
    for (std::size_t ch = 0; ch < mixing.rows(); ++ch) mixing(ch, f) = 0.0;
  Matrix out = kernels::omp::matmul(mixing, dec.sources);
  for (std::size_t ch = 0; ch < out.rows(); ++ch)
    for (double& v : out.row(ch)) v += dec.channel_means[ch];
  return out;
}

Recording remove_and_reconstruct(const IcaDecomposition& dec, const std::set<std::size_t>& flagged, double rate_hz) {
  Recording r;
  r.sample_rate_hz = rate_hz;
  r.channels = dec.channel_labels;
  r.data = reconstruct(dec, flagged);
  return r;
}

CleanResult clean_recording(const Recording& rec, const CleanConfig& cfg) {
  const Recording input = cfg.apply_bandpass ? bandpass(rec, cfg.lo_hz, cfg.hi_hz) : rec;
  std::vector<std::size_t> eeg_rows;
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < input.n_channels(); ++c)
    if (!is_aux_label(input.channels[c])) {
      eeg_rows.push_back(c);
      labels.push_back(input.channels[c]);
    }
  if (eeg_rows.empty()) throw DataError("recording has no EEG channels");
  Matrix x(eeg_rows.size(), input.n_samples());
  for (std::size_t i = 0; i < eeg_rows.size(); ++i) {
    const auto src = input.data.row(eeg_rows[i]);
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }

  CleanResult res;
  res.decomposition = fastica(x, cfg.k.value_or(eeg_rows.size()), cfg.ica, labels);
  res.scores = score_components(res.decomposition, input.sample_rate_hz, cfg.score);
  if (cfg.flags) {
    res.flagged = *cfg.flags;
  } else {
    for (const auto& s : res.scores)
      if (s.combined > cfg.flag_threshold) res.flagged.insert(s.component_index);
  }
  const Matrix clean = reconstruct(res.decomposition, res.flagged);
  res.cleaned = input;
  for (std::size_t i = 0; i < eeg_rows.size(); ++i) {
    const auto src = clean.row(i);
    std::copy(src.begin(), src.end(), res.cleaned.data.row(eeg_rows[i]).begin());
  }
  return res;
}

nlohmann::json clean_report(const CleanResult& r, const CleanConfig& cfg) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& s : r.scores)
    comps.push_back({{"component", s.component_index},
                     {"lowfreq_fraction", s.lowfreq_fraction},
                     {"frontal_fraction", s.frontal_fraction},
                     {"amplitude_ratio", s.amplitude_ratio},
                     {"combined", s.combined},
                     {"flagged", r.flagged.contains(s.component_index)}});
  return {
      {"components", comps},
      {"flagged", r.flagged},
      {"flag_source", cfg.flags ? "manual" : "automatic"},
      {"flag_threshold", cfg.flag_threshold},
      {"bandpass", cfg.apply_bandpass ? nlohmann::json{{"lo_hz", cfg.lo_hz}, {"hi_hz", cfg.hi_hz}} : nlohmann::json()},
      {"ica", {{"k", r.decomposition.mixing.cols()},
               {"converged", r.decomposition.converged},
               {"iterations", r.decomposition.iterations},
               {"seed", cfg.ica.seed}}},
  };
}

}  // namespace gazetrace
