#include "trex_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "trex/stream_io.hpp"
#include "trex_cli/svg.hpp"

namespace trex::cli {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pm(const MeanSd& m, const char* spec = "%.3f") { return fmt(spec, m.mean) + " ± " + fmt(spec, m.sd); }

template <typename F>
MeanSd summarize(const std::vector<TrialResult>& results, F field) {
  std::vector<double> v;
  v.reserve(results.size());
  for (const auto& r : results) v.push_back(field(r.metrics));
  return mean_sd(v);
}

int count_if_metric(const std::vector<TrialResult>& results, bool TrialMetrics::*flag) {
  return static_cast<int>(std::count_if(results.begin(), results.end(), [&](const TrialResult& r) { return r.metrics.*flag; }));
}

ojson metrics_json(const TrialMetrics& m) {
  return {{"n_slip", m.n_slip},
          {"fn_peak", m.fn_peak},
          {"delta_e", m.delta_e},
          {"slip_fraction", m.slip_fraction},
          {"sy_peak", m.sy_peak},
          {"success", m.success},
          {"drop", m.drop},
          {"deformed", m.deformed},
          {"effort_residual", m.effort_residual},
          {"pose_drift", m.pose_drift}};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell) {
  if (cell.empty()) return std::nan("");
  try {
    return std::stod(cell);
  } catch (const std::exception&) {
    return std::nan("");
  }
}

// Plant scaled to a different sensor size: imprint area, speckle count and CoP
// placement follow the image.
PlantParams bench_plant(int width, int height, std::uint64_t seed) {
  PlantParams p = soft_cup_preset();
  const double area = static_cast<double>(width) * height / (static_cast<double>(kSensorWidth) * kSensorHeight);
  p.width = width;
  p.height = height;
  p.cop_center_y *= static_cast<double>(height) / kSensorHeight;
  p.contact_area_ref *= area;
  p.speckle_density *= area;
  p.payload_mass = 0.06;
  p.rng_seed = seed;
  return p;
}

CalibrationProfile bench_profile(double f_stop) {
  CalibrationProfile p;
  p.tau = 5.0;
  p.theta_s = 0.3;
  p.theta_q = 0.07;
  p.theta_c = -9.0;
  p.f_lim = 5.7;
  p.f_stop = f_stop;
  p.material_label = "bench";
  return p;
}

}  // namespace

PlantParams resolve_preset(const std::string& name_or_path) {
  const fs::path path(name_or_path);
  if (path.extension() == ".json" || fs::exists(path)) {
    if (!fs::exists(path)) throw UsageError("preset file not found: " + path.string());
    try {
      return load_plant(path);
    } catch (const std::exception& e) {
      throw UsageError("cannot load preset " + path.string() + ": " + e.what());
    }
  }
  try {
    return preset_by_name(name_or_path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

fs::path profile_path(const GlobalOptions& global, const PlantParams& plant) {
  if (global.profile) return *global.profile;
  return global.out_dir / (plant.name + "_profile.json");
}

CalibrationProfile require_profile(const GlobalOptions& global, const PlantParams& plant) {
  const fs::path path = profile_path(global, plant);
  if (!fs::exists(path)) {
    throw UsageError("profile not found: " + path.string() + " (run `trex calibrate` first or pass --profile)");
  }
  try {
    CalibrationProfile p = load_profile(path);
    validate_profile(p);
    return p;
  } catch (const CalibrationError& e) {
    throw UsageError("bad profile " + path.string() + ": " + e.what());
  }
}

void write_summary(const fs::path& out_dir, const std::string& command, const std::string& json_text) {
  ensure_dir(out_dir);
  std::ofstream out(out_dir / (command + "_summary.json"), std::ios::trunc);
  out << json_text << '\n';
  if (!out) throw std::runtime_error("cannot write summary in " + out_dir.string());
}

// calibrate ---------------------------------------------------------------

std::string provenance_table(const CalibrationProfile& p) {
  const std::vector<std::pair<std::string, double>> rows = {
      {"tau", p.tau},         {"theta_s", p.theta_s}, {"theta_q", p.theta_q}, {"theta_c", p.theta_c},
      {"f_lim", p.f_lim},     {"f_stop", p.f_stop},   {"gamma", p.gamma},     {"alpha", p.alpha}};
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-9s %10s  %-15s %10s %9s\n", "parameter", "value", "method", "percentile",
                "samples");
  out += line;
  out += std::string(57, '-') + '\n';
  for (const auto& [name, value] : rows) {
    const auto it = p.provenance.find(name);
    const Provenance pr = it == p.provenance.end() ? Provenance{"-", std::nullopt, 0} : it->second;
    const std::string pct = pr.percentile ? fmt("P%g", *pr.percentile) : "-";
    const std::string n = pr.sample_count ? std::to_string(pr.sample_count) : "-";
    std::snprintf(line, sizeof line, "%-9s %10.4g  %-15s %10s %9s\n", name.c_str(), value, pr.method.c_str(),
                  pct.c_str(), n.c_str());
    out += line;
  }
  return out;
}

int cmd_calibrate(const GlobalOptions& global, const CalibrateOptions& opts, std::ostream& out) {
  const PlantParams plant = resolve_preset(global.preset);
  ensure_dir(global.out_dir);

  CalibrationRecording rec;
  std::string source;
  if (opts.stream) {
    if (!fs::exists(*opts.stream)) throw UsageError("stream not found: " + opts.stream->string());
    fs::path manifest_path = opts.manifest.value_or(fs::path(opts.stream->string() + ".manifest"));
    if (!fs::exists(manifest_path)) throw UsageError("manifest not found: " + manifest_path.string());
    std::vector<ManifestEntry> manifest;
    try {
      manifest = read_manifest(manifest_path);
    } catch (const CalibrationError& e) {
      throw UsageError(e.what());
    }
    rec = recording_from_stream(*opts.stream, manifest);
    source = opts.stream->string();
  } else {
    if (opts.static_frames < 1) throw UsageError("--static-frames must be positive");
    CalibrationProtocol proto;
    proto.static_frames = opts.static_frames;
    const fs::path stream = opts.write_stream ? global.out_dir / (plant.name + "_calibration.trfx") : fs::path{};
    rec = simulate_calibration(plant, global.seed, proto, stream);
    source = stream.empty() ? "simulation" : stream.string();
  }

  FixedParameters fixed;
  fixed.f_stop = opts.f_stop.value_or(plant.f_stop);
  if (!(fixed.f_stop > 0.0)) throw UsageError("--f-stop must be positive");
  const CalibrationProfile profile = run_calibration(rec, fixed, opts.material.value_or(plant.name));
  const fs::path path = opts.out.value_or(profile_path(global, plant));
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  save_profile(path, profile);

  const SlipRuleCheck check = check_slip_rule(rec, profile.theta_s);
  const auto noise = static_sy_noise(rec);
  const auto peaks = slip_peaks(rec);
  const double separation = *std::min_element(peaks.begin(), peaks.end()) / percentile(noise, 95.0);

  out << "profile " << path.string() << " (" << plant.name << ", seed " << global.seed << ")\n\n"
      << provenance_table(profile) << '\n'
      << "slip rule: TPR " << fmt("%.3f", check.tpr) << " over " << check.events << " events, FPR "
      << fmt("%.4f", check.fpr) << " over " << check.static_frames << " static frames, separation "
      << fmt("%.2f", separation) << "x\n";

  ojson s;
  s["command"] = "calibrate";
  s["preset"] = plant.name;
  s["seed"] = global.seed;
  s["source"] = source;
  s["profile"] = path.string();
  s["thresholds"] = {{"tau", profile.tau},     {"theta_s", profile.theta_s}, {"theta_q", profile.theta_q},
                     {"theta_c", profile.theta_c}, {"f_lim", profile.f_lim},     {"f_stop", profile.f_stop}};
  s["slip_rule"] = {{"tpr", check.tpr},
                    {"fpr", check.fpr},
                    {"events", check.events},
                    {"static_frames", check.static_frames},
                    {"separation", separation}};
  write_summary(global.out_dir, "calibrate", s.dump(2));
  return kExitOk;
}

// ablate ------------------------------------------------------------------

int count_effort_reversals(const TrialRecord& rec) {
  int reversals = 0;
  int last_sign = 0;
  for (std::size_t i = 1; i < rec.cycles.size(); ++i) {
    const double d = rec.cycles[i].command.effort - rec.cycles[i - 1].command.effort;
    if (rec.cycles[i].command.phase != Phase::Holding || d == 0.0) continue;
    const int sign = d > 0 ? 1 : -1;
    if (last_sign != 0 && sign != last_sign) ++reversals;
    last_sign = sign;
  }
  return reversals;
}

namespace {

void print_trial_header(std::ostream& out) {
  out << "  trial  success  drop  deformed  n_slip  fn_peak  delta_e  residual  slip_frac  sy_peak  drift  rev\n";
}

void print_trial_row(std::ostream& out, int k, const TrialResult& r) {
  const TrialMetrics& m = r.metrics;
  char line[200];
  std::snprintf(line, sizeof line, "  %5d  %7s  %4s  %8s  %6d  %7.3f  %7.0f  %8.0f  %9.3f  %7.3f  %5.3f  %3d\n", k,
                m.success ? "yes" : "no", m.drop ? "yes" : "no", m.deformed ? "yes" : "no", m.n_slip, m.fn_peak,
                m.delta_e, m.effort_residual, m.slip_fraction, m.sy_peak, m.pose_drift,
                count_effort_reversals(r.record));
  out << line;
}

void print_aggregate(std::ostream& out, const std::vector<TrialResult>& results) {
  const int n = static_cast<int>(results.size());
  out << "  success " << count_if_metric(results, &TrialMetrics::success) << '/' << n << ", drop "
      << count_if_metric(results, &TrialMetrics::drop) << '/' << n << ", deformed "
      << count_if_metric(results, &TrialMetrics::deformed) << '/' << n << '\n'
      << "  n_slip " << pm(summarize(results, [](const TrialMetrics& m) { return double(m.n_slip); }), "%.1f")
      << "  fn_peak " << pm(summarize(results, [](const TrialMetrics& m) { return m.fn_peak; }))
      << "  delta_e " << pm(summarize(results, [](const TrialMetrics& m) { return m.delta_e; }), "%.0f")
      << "  residual " << pm(summarize(results, [](const TrialMetrics& m) { return m.effort_residual; }), "%.0f")
      << '\n'
      << "  slip_fraction " << pm(summarize(results, [](const TrialMetrics& m) { return m.slip_fraction; }))
      << "  sy_peak " << pm(summarize(results, [](const TrialMetrics& m) { return m.sy_peak; }))
      << "  pose_drift " << pm(summarize(results, [](const TrialMetrics& m) { return m.pose_drift; })) << "\n\n";
}

ojson aggregate_json(const std::vector<TrialResult>& results) {
  ojson trials = ojson::array();
  for (const auto& r : results) {
    ojson t = metrics_json(r.metrics);
    t["seed"] = r.seed;
    t["effort_reversals"] = count_effort_reversals(r.record);
    trials.push_back(std::move(t));
  }
  auto ms = [](const MeanSd& m) { return ojson{{"mean", m.mean}, {"sd", m.sd}}; };
  return {{"trials", trials},
          {"success", count_if_metric(results, &TrialMetrics::success)},
          {"drop", count_if_metric(results, &TrialMetrics::drop)},
          {"deformed", count_if_metric(results, &TrialMetrics::deformed)},
          {"n_slip", ms(summarize(results, [](const TrialMetrics& m) { return double(m.n_slip); }))},
          {"fn_peak", ms(summarize(results, [](const TrialMetrics& m) { return m.fn_peak; }))},
          {"delta_e", ms(summarize(results, [](const TrialMetrics& m) { return m.delta_e; }))},
          {"effort_residual", ms(summarize(results, [](const TrialMetrics& m) { return m.effort_residual; }))},
          {"slip_fraction", ms(summarize(results, [](const TrialMetrics& m) { return m.slip_fraction; }))},
          {"sy_peak", ms(summarize(results, [](const TrialMetrics& m) { return m.sy_peak; }))},
          {"pose_drift", ms(summarize(results, [](const TrialMetrics& m) { return m.pose_drift; }))}};
}

ExperimentOptions experiment_options(const GlobalOptions& global, bool streams) {
  if (global.trials < 1) throw UsageError("--trials must be positive");
  ExperimentOptions o;
  o.seed = global.seed;
  o.trials = global.trials;
  o.out_dir = global.out_dir;
  o.write_streams = streams;
  return o;
}

}  // namespace

int cmd_ablate(const GlobalOptions& global, const AblateOptions& opts, std::ostream& out) {
  const PlantParams plant = resolve_preset(global.preset);
  const CalibrationProfile profile = require_profile(global, plant);
  std::string configs = opts.configs == "all" ? "ABCD" : opts.configs;
  if (configs.empty()) throw UsageError("no ablation configuration given");
  for (char& c : configs) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (c < 'A' || c > 'D') throw UsageError(std::string("unknown ablation configuration '") + c + "'");
  }
  const ExperimentOptions eo = experiment_options(global, opts.write_streams);

  ojson s;
  s["command"] = "ablate";
  s["preset"] = plant.name;
  s["seed"] = global.seed;
  s["trials"] = global.trials;
  for (char c : configs) {
    const auto results = run_ablation(profile, plant, c, eo);
    const ChannelMask mask = ablation_mask(c);
    out << "config " << c << " (slip " << (mask.slip ? "on" : "off") << ", release "
        << (mask.release ? "on" : "off") << ", protect " << (mask.protect ? "on" : "off") << ")\n";
    print_trial_header(out);
    for (int k = 0; k < static_cast<int>(results.size()); ++k) print_trial_row(out, k, results[k]);
    print_aggregate(out, results);
    s["configs"][std::string(1, c)] = aggregate_json(results);
  }
  write_summary(global.out_dir, "ablate", s.dump(2));
  return kExitOk;
}

int cmd_pour(const GlobalOptions& global, const PourOptions& opts, std::ostream& out) {
  const PlantParams plant = resolve_preset(global.preset);
  const CalibrationProfile profile = require_profile(global, plant);
  const ExperimentOptions eo = experiment_options(global, opts.write_streams);

  ojson s;
  s["command"] = "pour";
  s["preset"] = plant.name;
  s["seed"] = global.seed;
  s["trials"] = global.trials;
  for (PourVolume v : opts.volumes) {
    for (bool reflex : opts.reflex) {
      const auto results = run_pour(profile, plant, v, reflex, eo);
      out << "pour " << to_string(v) << ", reflex " << (reflex ? "on" : "off (frozen)") << '\n';
      print_trial_header(out);
      for (int k = 0; k < static_cast<int>(results.size()); ++k) print_trial_row(out, k, results[k]);
      print_aggregate(out, results);
      s["arms"][std::string(to_string(v)) + (reflex ? "_on" : "_off")] = aggregate_json(results);
    }
  }
  write_summary(global.out_dir, "pour", s.dump(2));
  return kExitOk;
}

// replay ------------------------------------------------------------------

int cmd_replay(const GlobalOptions& global, const ReplayOptions& opts, std::ostream& out) {
  const PlantParams plant = resolve_preset(global.preset);
  const CalibrationProfile profile = require_profile(global, plant);
  if (!fs::exists(opts.stream)) throw UsageError("stream not found: " + opts.stream.string());
  const fs::path output = opts.output.value_or(global.out_dir / (opts.stream.stem().string() + "_replay.csv"));
  if (output.has_parent_path()) ensure_dir(output.parent_path());

  const ControllerConfig config = controller_for(profile, plant);
  std::vector<ReplayCycle> cycles;
  {
    CommandLog log(output);
    cycles = replay_stream(opts.stream, config, pipeline_for(profile), opts.grasp_start, &log);
  }

  std::vector<std::int64_t> slip;
  for (const auto& c : cycles) {
    if (c.command.fired.has(Channel::Slip)) slip.push_back(c.command.cycle);
  }
  out << "replayed " << cycles.size() << " cycles from " << opts.stream.string() << " -> " << output.string() << '\n'
      << "Slip fired on " << slip.size() << " cycles";
  if (!slip.empty()) out << ", first at cycle " << slip.front();
  out << '\n';

  ojson s;
  s["command"] = "replay";
  s["stream"] = opts.stream.string();
  s["log"] = output.string();
  s["cycles"] = cycles.size();
  s["slip_cycles"] = slip;
  if (!cycles.empty()) {
    s["final_effort"] = cycles.back().command.effort;
    s["final_phase"] = to_string(cycles.back().command.phase);
  }
  write_summary(global.out_dir, "replay", s.dump(2));
  return kExitOk;
}

// bench -------------------------------------------------------------------

BenchReport run_bench(const BenchOptions& opts, std::uint64_t seed) {
  if (opts.cycles < 1 || opts.width < 16 || opts.height < 16) throw UsageError("bench needs cycles >= 1 and frames >= 16x16");
  const PlantParams plant = bench_plant(opts.width, opts.height, seed);
  const CalibrationProfile profile = bench_profile(plant.f_stop);
  const ControllerConfig config = controller_for(profile, plant);

  // A liftoff trial provides frames with contact, shear and a slip event.
  std::vector<std::pair<TactileFrame, TactileFrame>> frames;
  ScenarioHooks hooks;
  hooks.on_frames = [&](const PlantState&, const TactileFrame& l, const TactileFrame& r) { frames.emplace_back(l, r); };
  run_scenario(liftoff_script(seed), config, plant, pipeline_for(profile), DriveOptions{}, hooks);

  TactileProcessor processor(pipeline_for(profile));
  ControllerState ctrl = begin_grasp(initial_state(config), config);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(opts.cycles));
  const int total = opts.warmup + opts.cycles;
  for (int i = 0; i < total; ++i) {
    const auto& [l, r] = frames[static_cast<std::size_t>(i) % frames.size()];
    const auto t0 = std::chrono::steady_clock::now();
    const ProxySample sample = processor.process(l, r, false);
    GripperCommand cmd;
    std::tie(cmd, ctrl) = step(ctrl, sample, config);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= opts.warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  BenchReport rep;
  rep.cycles = opts.cycles;
  rep.width = opts.width;
  rep.height = opts.height;
  rep.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  rep.p95_ms = percentile(ms, 95.0);
  rep.max_ms = *std::max_element(ms.begin(), ms.end());
  return rep;
}

int cmd_bench(const GlobalOptions& global, const BenchOptions& opts, std::ostream& out) {
  const BenchReport rep = run_bench(opts, global.seed);
  out << "bench " << rep.width << 'x' << rep.height << ", " << rep.cycles << " cycles: mean "
      << fmt("%.3f", rep.mean_ms) << " ms (" << fmt("%.1f", 1000.0 / rep.mean_ms) << " Hz), p95 "
      << fmt("%.3f", rep.p95_ms) << " ms, max " << fmt("%.3f", rep.max_ms) << " ms\n";
  ojson s;
  s["command"] = "bench";
  s["width"] = rep.width;
  s["height"] = rep.height;
  s["cycles"] = rep.cycles;
  s["mean_ms"] = rep.mean_ms;
  s["p95_ms"] = rep.p95_ms;
  s["max_ms"] = rep.max_ms;
  write_summary(global.out_dir, "bench", s.dump(2));
  return kExitOk;
}

// plot --------------------------------------------------------------------

std::vector<fs::path> write_plots(const fs::path& log, const fs::path& prefix,
                                  const std::optional<CalibrationProfile>& profile) {
  std::ifstream in(log);
  if (!in) throw UsageError("cannot open command log " + log.string());

  std::map<std::string, std::vector<double>> cols;
  std::vector<std::string> names;
  std::string line;
  if (std::getline(in, line)) names = split_csv_line(line);
  for (const auto& n : names) cols[n];
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    for (std::size_t i = 0; i < names.size(); ++i) cols[names[i]].push_back(i < cells.size() ? parse_cell(cells[i]) : std::nan(""));
  }
  auto col = [&](const std::string& n) { return cols.count(n) ? cols[n] : std::vector<double>{}; };
  const std::vector<double> x = col("cycle");

  std::vector<double> dc;
  const auto cop = col("mean_cop_y"), ref = col("cop_ref");
  for (std::size_t i = 0; i < std::min(cop.size(), ref.size()); ++i) dc.push_back(cop[i] - ref[i]);

  std::vector<std::pair<std::string, Panel>> panels;
  Panel sy{"Shear S_y", "cycle", "S_y", {{"left", "#1f77b4", x, col("sy_raw_L")}, {"right", "#ff7f0e", x, col("sy_raw_R")}}};
  Panel effort{"Grip effort", "cycle", "effort", {{"", "#2ca02c", x, col("effort")}}};
  Panel position{"Grip position", "cycle", "position", {{"", "#9467bd", x, col("position")}}};
  Panel fn{"Normal force F_n max (EMA)", "cycle", "F_n", {{"", "#d62728", x, col("fn_ema_max")}}};
  Panel cp{"CoP shift dC_y", "cycle", "dC_y (px)", {{"", "#8c564b", x, dc}}};
  if (profile) {
    sy.threshold = profile->theta_s;
    sy.threshold_label = "theta_s";
    fn.threshold = profile->f_lim;
    fn.threshold_label = "F_lim";
    cp.threshold = profile->theta_c;
    cp.threshold_label = "theta_c";
  }
  panels = {{"sy", sy}, {"effort", effort}, {"position", position}, {"fn", fn}, {"cop", cp}};

  if (prefix.has_parent_path()) ensure_dir(prefix.parent_path());
  std::vector<fs::path> written;
  for (const auto& [suffix, panel] : panels) {
    const fs::path path = prefix.string() + "_" + suffix + ".svg";
    std::ofstream out(path, std::ios::trunc);
    out << render_panel_svg(panel);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

int cmd_plot(const GlobalOptions& global, const PlotOptions& opts, std::ostream& out) {
  if (!fs::exists(opts.log)) throw UsageError("command log not found: " + opts.log.string());
  std::optional<CalibrationProfile> profile;
  const PlantParams plant = resolve_preset(global.preset);
  if (global.profile || fs::exists(profile_path(global, plant))) profile = require_profile(global, plant);
  const fs::path prefix = opts.prefix.value_or(global.out_dir / opts.log.stem());
  for (const auto& p : write_plots(opts.log, prefix, profile)) out << p.string() << '\n';
  return kExitOk;
}

// dispatch ----------------------------------------------------------------

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tactile reflex grasping experiments on a simulated gripper", "trex"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::string profile;
  app.add_option("--profile", profile, "Calibration profile (default: <out-dir>/<preset>_profile.json)");
  app.add_option("--preset", g.preset, "Plant preset: soft, hard or a plant JSON file")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--trials", g.trials, "Trials per configuration")->capture_default_str();

  CalibrateOptions cal;
  std::string stream, manifest;
  auto* c_cal = app.add_subcommand("calibrate", "Derive a calibration profile from a recording");
  c_cal->add_option("--static-frames", cal.static_frames, "Static-hold frames in the simulated protocol")
      ->capture_default_str();
  c_cal->add_option("--stream,--recording", stream, "Calibrate from a recorded TRFX stream");
  c_cal->add_option("--manifest", manifest, "Segment manifest (default: <stream>.manifest)");
  c_cal->add_flag("--write-stream", cal.write_stream, "Keep the simulated recording and manifest");
  std::string material, cal_out;
  double f_stop = 0.0;
  c_cal->add_option("--material", material, "Material label stored in the profile (default: preset name)");
  auto* f_stop_opt = c_cal->add_option("--f-stop", f_stop, "Grasp stop F_n (default: preset value)");
  c_cal->add_option("--out", cal_out, "Profile output path");

  AblateOptions abl;
  auto* c_abl = app.add_subcommand("ablate", "Run the channel ablation");
  c_abl->add_option("--config", abl.configs, "Configurations to run, e.g. D or ABCD or all")->capture_default_str();
  c_abl->add_flag("--streams", abl.write_streams, "Write TRFX streams per trial");

  std::string volume = "both", reflex = "both";
  PourOptions pour;
  auto* c_pour = app.add_subcommand("pour", "Run the pouring comparison");
  c_pour->add_option("--volume", volume, "low, high or both")
      ->check(CLI::IsMember({"low", "high", "both"}))
      ->capture_default_str();
  c_pour->add_option("--reflex", reflex, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}))->capture_default_str();
  c_pour->add_flag("--streams", pour.write_streams, "Write TRFX streams per trial");

  ReplayOptions rep;
  std::string rep_out;
  auto* c_rep = app.add_subcommand("replay", "Run the pipeline and controller over a recorded stream");
  c_rep->add_option("stream", rep.stream, "TRFX stream")->required();
  c_rep->add_option("-o,--output", rep_out, "Command log CSV");
  c_rep->add_option("--grasp-start", rep.grasp_start, "Cycle at which the grasp starts")->capture_default_str();

  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "Time the per-cycle pipeline");
  c_bench->add_option("--cycles", bench.cycles, "Timed cycles")->capture_default_str()->check(CLI::PositiveNumber);
  c_bench->add_option("--width", bench.width, "Frame width")->capture_default_str();
  c_bench->add_option("--height", bench.height, "Frame height")->capture_default_str();

  PlotOptions plot;
  std::string prefix;
  auto* c_plot = app.add_subcommand("plot", "Plot a command log as SVG panels");
  c_plot->add_option("log", plot.log, "Command log CSV")->required();
  c_plot->add_option("--prefix", prefix, "Output path prefix (default: <out-dir>/<log stem>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!profile.empty()) g.profile = profile;

  try {
    if (app.got_subcommand(c_cal)) {
      if (!stream.empty()) cal.stream = stream;
      if (!manifest.empty()) cal.manifest = manifest;
      if (!material.empty()) cal.material = material;
      if (f_stop_opt->count() > 0) cal.f_stop = f_stop;
      if (!cal_out.empty()) cal.out = cal_out;
      return cmd_calibrate(g, cal, out);
    }
    if (app.got_subcommand(c_abl)) return cmd_ablate(g, abl, out);
    if (app.got_subcommand(c_pour)) {
      pour.volumes.clear();
      if (volume != "high") pour.volumes.push_back(PourVolume::Low);
      if (volume != "low") pour.volumes.push_back(PourVolume::High);
      pour.reflex.clear();
      if (reflex != "on") pour.reflex.push_back(false);
      if (reflex != "off") pour.reflex.push_back(true);
      return cmd_pour(g, pour, out);
    }
    if (app.got_subcommand(c_rep)) {
      if (!rep_out.empty()) rep.output = rep_out;
      return cmd_replay(g, rep, out);
    }
    if (app.got_subcommand(c_bench)) return cmd_bench(g, bench, out);
    if (app.got_subcommand(c_plot)) {
      if (!prefix.empty()) plot.prefix = prefix;
      return cmd_plot(g, plot, out);
    }
  } catch (const UsageError& e) {
    err << "trex: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "trex: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CalibrationInfeasible& e) {
    err << "trex: calibration infeasible: " << e.what() << '\n';
    return kExitTaskFailure;
  } catch (const CalibrationError& e) {
    err << "trex: calibration failed: " << e.what() << '\n';
    return kExitTaskFailure;
  } catch (const std::exception& e) {
    err << "trex: " << e.what() << '\n';
    return kExitTaskFailure;
  }
  return kExitUsage;
}

}  // namespace trex::cli
