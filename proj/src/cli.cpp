#include "gazetrace/cli.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "gazetrace/acquisition.hpp"
#include "gazetrace/errors.hpp"
#include "gazetrace/gaze_factor.hpp"
#include "gazetrace/marker_codec.hpp"
#include "gazetrace/preprocess.hpp"
#include "gazetrace/session.hpp"
#include "gazetrace/synth.hpp"
#include "json_util.hpp"

namespace gazetrace::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  bool fixed_time = false;
  bool verbose = false;
};

std::int64_t start_time_ns(const Globals& g) {
  if (g.fixed_time) return 0;
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void emit_json(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) out << j.dump(2) << '\n';
  else detail::write_json_file(path, j);
}

void require_distinct(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out) && fs::equivalent(in, out, ec)) throw UsageError("output path must differ from input path " + in.string());
}

std::set<std::size_t> parse_index_list(const std::string& s) {
  std::set<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.insert(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw UsageError("bad component index '" + item + "' in --flag");
    }
  }
  return out;
}

DataEncoding encoding_of(bool csv) { return csv ? DataEncoding::Csv : DataEncoding::F32le; }

void print_diagnostics(const std::vector<std::string>& diag, std::ostream& err) {
  for (const auto& d : diag) err << "note: " << d << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gazetrace: synchronized EEG acquisition simulation, artifact removal and gaze-direction models"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every random choice")->type_name("N");
  app.add_flag("--fixed-time", g.fixed_time, "Write start_time_ns = 0 so outputs are byte-reproducible");
  app.add_flag("--verbose", g.verbose, "Extra diagnostics on stderr");
  app.fallthrough();

  std::function<void()> action;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run producer, decoder and recorder over loopback TCP");
  std::string sim_script, sim_gaze, sim_out, sim_clock = "virtual";
  double sim_compress = 100.0, sim_delay = 0.0;
  bool sim_no_comp = false, sim_stepped = false, sim_csv = false;
  int sim_pings = 9;
  sim->add_option("--script", sim_script, "Event script JSON")->required();
  sim->add_option("--gaze", sim_gaze, "Gaze cue JSON [{t_s, direction}]");
  sim->add_option("--out", sim_out, "Session directory to write")->required();
  sim->add_option("--compress", sim_compress, "Time compression factor (0 = as fast as possible)");
  sim->add_option("--delay-ms", sim_delay, "Artificial one-way event link delay");
  sim->add_option("--clock", sim_clock, "virtual | wall")->check(CLI::IsMember({"virtual", "wall"}));
  sim->add_option("--pings", sim_pings, "Pings for the link delay estimate");
  sim->add_flag("--no-compensate", sim_no_comp, "Record raw receive times");
  sim->add_flag("--stepped", sim_stepped, "Single-threaded cooperative run without sockets");
  sim->add_flag("--csv", sim_csv, "Store samples as CSV");
  sim->callback([&] {
    action = [&] {
      const auto script = script_from_json(detail::read_json_file(sim_script));
      std::vector<GazeCue> gaze;
      if (!sim_gaze.empty()) gaze = gaze_cues_from_json(detail::read_json_file(sim_gaze));
      SimConfig cfg;
      cfg.compress = sim_compress;
      cfg.link_delay_ms = sim_delay;
      cfg.clock = sim_clock == "wall" ? ClockMode::Wall : ClockMode::Virtual;
      cfg.compensate = !sim_no_comp;
      cfg.n_pings = sim_pings;
      cfg.seed = g.seed.value_or(0);
      cfg.start_time_ns = start_time_ns(g);
      const auto res = sim_stepped ? simulate_stepped(script, gaze, cfg) : simulate(script, gaze, cfg);
      save_session(res.session, sim_out, encoding_of(sim_csv));
      if (g.verbose) {
        print_diagnostics(res.diagnostics, err);
        err << "wall time " << res.wall_seconds << " s\n";
      }
      out << json{{"events", res.session.events.size()},
                  {"delay_estimate_ns", res.delay_estimate_ns},
                  {"duration_s", res.session.recording.duration_s()}}
                 .dump()
          << '\n';
    };
  });

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a ground-truth synthetic session");
  std::string syn_spec, syn_out;
  bool syn_csv = false;
  syn->add_option("--spec", syn_spec, "SynthSpec JSON (defaults when omitted)");
  syn->add_option("--out", syn_out, "Session directory to write")->required();
  syn->add_flag("--csv", syn_csv, "Store samples as CSV");
  syn->callback([&] {
    action = [&] {
      SynthSpec spec = syn_spec.empty() ? SynthSpec::defaults() : synth_spec_from_json(detail::read_json_file(syn_spec));
      if (g.seed) spec.seed = *g.seed;
      auto res = gen_session(spec);
      res.session.recording.start_time_ns = start_time_ns(g);
      save_session(res.session, syn_out, encoding_of(syn_csv));
      save_truth(res.truth, spec, syn_out);
      if (g.verbose) err << "mixing condition " << res.truth.mixing_condition << '\n';
    };
  });

  // detect
  auto* det = app.add_subcommand("detect", "Decode marker bursts from an audio stream or a session's aux channels");
  std::string det_in, det_session, det_codec, det_out;
  det->add_option("--in", det_in, "float32 audio stream with its .json sidecar");
  det->add_option("--session", det_session, "Session directory: decode AUX1 events and AUX2 gaze codes");
  det->add_option("--codec", det_codec, "Codec config JSON");
  det->add_option("--out", det_out, "Write the JSON result here instead of stdout");
  det->callback([&] {
    action = [&] {
      if (det_in.empty() == det_session.empty()) throw UsageError("detect needs exactly one of --in or --session");
      json result;
      if (!det_in.empty()) {
        CodecConfig cfg = det_codec.empty() ? CodecConfig::audio_default() : codec_from_json(detail::read_json_file(det_codec));
        const auto stream = load_stream(det_in);
        cfg.sample_rate_hz = stream.sample_rate_hz;
        cfg.check();
        json ev = json::array();
        for (const auto& e : detect_bursts(stream.samples, cfg)) ev.push_back({{"code", e.code}, {"onset_s", e.onset_s}});
        result = {{"events", ev}};
      } else {
        const auto s = load_session(det_session);
        CodecConfig cfg = det_codec.empty() ? CodecConfig::aux_default() : codec_from_json(detail::read_json_file(det_codec));
        cfg.check();
        const auto& rec = s.recording;
        std::vector<double> aux1(rec.data.row(rec.require_channel(kAux1)).begin(), rec.data.row(rec.require_channel(kAux1)).end());
        for (double& v : aux1) v /= kAuxFullScaleUv;
        json ev = json::array();
        for (const auto& e : detect_bursts(aux1, cfg)) ev.push_back({{"code", e.code}, {"onset_s", e.onset_s}});
        std::vector<double> aux2(rec.data.row(rec.require_channel(kAux2)).begin(), rec.data.row(rec.require_channel(kAux2)).end());
        for (double& v : aux2) v /= kAuxFullScaleUv;
        const auto gz = decode_gaze(aux2, GazeCodeTable{}, rec.sample_rate_hz);
        json gv = json::array();
        for (const auto& e : gz.events) gv.push_back({{"direction", to_string(e.direction)}, {"onset_s", e.onset_s}});
        result = {{"events", ev}, {"gaze", gv}, {"gaze_diagnostics", gz.diagnostics}};
        print_diagnostics(gz.diagnostics, err);
      }
      emit_json(result, det_out, out);
    };
  });

  // clean
  auto* cln = app.add_subcommand("clean", "ICA artifact removal");
  std::string cln_in, cln_out, cln_flags, cln_report;
  CleanConfig ccfg;
  std::size_t cln_k = 0;
  cln->add_option("--in", cln_in, "Input session directory")->required();
  cln->add_option("--out", cln_out, "Output session directory")->required();
  cln->add_option("--flag-threshold", ccfg.flag_threshold, "Flag components whose combined score exceeds this");
  cln->add_option("--flag", cln_flags, "Comma-separated component indices; overrides scoring");
  cln->add_option("--k", cln_k, "Number of components (default: all EEG channels)");
  cln->add_option("--max-iter", ccfg.ica.max_iter, "FastICA iteration cap");
  cln->add_flag("--bandpass", ccfg.apply_bandpass, "Band-pass filter before ICA");
  cln->add_option("--lo", ccfg.lo_hz, "Band-pass low edge (Hz)");
  cln->add_option("--hi", ccfg.hi_hz, "Band-pass high edge (Hz)");
  cln->add_option("--report", cln_report, "Write the component report here instead of stdout");
  cln->callback([&] {
    action = [&] {
      require_distinct(cln_in, cln_out);
      Session s = load_session(cln_in);
      if (!cln_flags.empty()) ccfg.flags = parse_index_list(cln_flags);
      if (cln_k > 0) ccfg.k = cln_k;
      ccfg.ica.seed = g.seed.value_or(0);
      const auto res = clean_recording(s.recording, ccfg);
      s.recording = res.cleaned;
      s.recording.start_time_ns = g.fixed_time ? 0 : s.recording.start_time_ns;
      save_session(s, cln_out);
      emit_json(clean_report(res, ccfg), cln_report, out);
      if (g.verbose && !res.decomposition.converged)
        err << "note: FastICA stopped at the iteration cap (" << res.decomposition.iterations << ")\n";
    };
  });

  // train
  auto* trn = app.add_subcommand("train", "Fit the gaze factor model on labelled sessions");
  std::vector<std::string> trn_in;
  std::string trn_out;
  std::size_t trn_k = 0, trn_window = 500;
  double trn_tau = 0.0;
  trn->add_option("--in", trn_in, "Session directories")->required();
  trn->add_option("--out", trn_out, "Model JSON to write")->required();
  trn->add_option("--k", trn_k, "Retained components (default: Kaiser)");
  trn->add_option("--tau", trn_tau, "Rejection radius (default: mean + 3 sd of training distances)");
  trn->add_option("--window", trn_window, "Feature window length in samples");
  trn->callback([&] {
    action = [&] {
      FeatureConfig fc;
      fc.window_len_samples = trn_window;
      std::vector<LabeledFeatures> parts;
      double rate = 0.0;
      for (const auto& dir : trn_in) {
        const auto s = load_session(dir);
        if (rate == 0.0) rate = s.recording.sample_rate_hz;
        else if (rate != s.recording.sample_rate_hz) throw DataError("training sessions have different sample rates");
        parts.push_back(training_features(s, fc, eeg_labels()));
      }
      const auto all = stack(parts);
      FitOptions opts;
      if (trn_k > 0) opts.k = trn_k;
      if (trn_tau > 0.0) opts.tau = trn_tau;
      auto m = fit_factor_model(all.features, all.labels, fc, opts);
      m.sample_rate_hz = rate;
      m.channel_order = eeg_labels();
      save_model(m, trn_out);
      if (g.verbose) err << "retained " << m.retained_k << " components, tau " << m.reject_tau << '\n';
    };
  });

  // classify
  auto* cls = app.add_subcommand("classify", "Classify each gaze interval (or the whole session) of a recording");
  std::string cls_model, cls_in, cls_report;
  cls->add_option("--model", cls_model, "Model JSON")->required();
  cls->add_option("--in", cls_in, "Session directory")->required();
  cls->add_option("--report", cls_report, "Write the JSON report here instead of stdout");
  cls->callback([&] {
    action = [&] {
      const auto m = load_model(cls_model);
      const auto s = load_session(cls_in);
      const auto order = m.channel_order.empty() ? eeg_labels() : m.channel_order;
      std::vector<GazeInterval> segments = s.gaze;
      if (segments.empty()) segments.push_back({0.0, s.recording.duration_s(), GazeDirection::Unknown});
      json rows = json::array();
      for (const auto& seg : segments) {
        const auto rec = slice_recording(s.recording, seg.t0_s, seg.t1_s);
        const auto feats = extract_features(concatenate_channels(rec, order), s.recording.sample_rate_hz, m.feature_config);
        auto r = to_json(classify(m, feats));
        r["t0_s"] = seg.t0_s;
        r["t1_s"] = seg.t1_s;
        r["labelled"] = to_string(seg.direction);
        rows.push_back(r);
      }
      emit_json({{"reject_tau", m.reject_tau}, {"segments", rows}}, cls_report, out);
    };
  });

  // report
  auto* rep = app.add_subcommand("report", "CSV tables of eigenvalues, centroids and reference scores");
  std::string rep_model, rep_eig, rep_cent, rep_ref, rep_subject = "1";
  rep->add_option("--model", rep_model, "Model JSON");
  rep->add_option("--eigenvalues", rep_eig, "Eigenvalue CSV to write");
  rep->add_option("--centroids", rep_cent, "Centroid CSV to write");
  rep->add_option("--reference", rep_ref, "Published blind-test scores CSV to write");
  rep->add_option("--subject", rep_subject, "Subject column value");
  rep->callback([&] {
    action = [&] {
      if (rep_model.empty() && (!rep_eig.empty() || !rep_cent.empty()))
        throw UsageError("--eigenvalues and --centroids need --model");
      if (rep_eig.empty() && rep_cent.empty() && rep_ref.empty())
        throw UsageError("report needs at least one of --eigenvalues, --centroids, --reference");
      if (!rep_model.empty()) {
        const auto m = load_model(rep_model);
        if (!rep_eig.empty()) detail::write_text_file(rep_eig, eigenvalue_csv(m, rep_subject));
        if (!rep_cent.empty()) detail::write_text_file(rep_cent, centroid_csv(m));
      }
      if (!rep_ref.empty()) detail::write_text_file(rep_ref, reference_csv());
    };
  });

  // latency
  auto* lat = app.add_subcommand("latency", "Onset residuals of a recorded session against its script");
  std::string lat_session, lat_script, lat_out;
  lat->add_option("--session", lat_session, "Session directory")->required();
  lat->add_option("--script", lat_script, "Event script JSON")->required();
  lat->add_option("--out", lat_out, "Write the JSON report here instead of stdout");
  lat->callback([&] {
    action = [&] {
      const auto s = load_session(lat_session);
      const auto script = script_from_json(detail::read_json_file(lat_script));
      emit_json(to_json(latency_report(s, script)), lat_out, out);
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (action) action();
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace gazetrace::cli
