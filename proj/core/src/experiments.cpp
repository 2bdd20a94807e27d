#include "trex/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "trex/stream_io.hpp"

namespace trex {
namespace {

double jitter_factor(std::mt19937_64& rng, double spread) {
  return std::uniform_real_distribution<double>(1.0 - spread, 1.0 + spread)(rng);
}

ScenarioEvent event(EventKind kind, std::int64_t start, double magnitude, int ramp = 0, int hold = 0,
                    int release = 0) {
  return ScenarioEvent{kind, start, magnitude, ramp, hold, release};
}

/// Square dilation by `radius` using separable running maxima.
MaskImage dilate(const MaskImage& m, int radius) {
  const int h = m.height(), w = m.width();
  MaskImage tmp(h, w, 0), out(h, w, 0);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* src = m.row(y);
    std::uint8_t* dst = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius) && !v; ++k) v = src[k];
      dst[x] = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    std::uint8_t* dst = out.row(y);
    for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius); ++k) {
      const std::uint8_t* src = tmp.row(k);
      for (int x = 0; x < w; ++x) dst[x] |= src[x];
    }
  }
  return out;
}

std::pair<double, double> command_at(const std::vector<std::pair<double, double>>& commands, std::int64_t c) {
  return commands[static_cast<std::size_t>(std::clamp<std::int64_t>(c, 0, static_cast<std::int64_t>(commands.size()) - 1))];
}

CalibrationRecording segment_samples(const std::vector<ProxySample>& samples, const std::vector<ManifestEntry>& manifest,
                                     std::vector<double> noise_pixels) {
  CalibrationRecording rec;
  for (const auto& m : manifest) {
    CalibrationSegment seg;
    seg.label = m.label;
    seg.start_us = m.start_us;
    seg.end_us = m.end_us;
    for (const auto& s : samples) {
      if (s.timestamp_us >= m.start_us && s.timestamp_us <= m.end_us) seg.samples.push_back(s);
    }
    rec.segments.push_back(std::move(seg));
  }
  for (auto& seg : rec.segments) {
    if (seg.label == SegmentLabel::StaticHold) {
      seg.diff_pixel_samples = std::move(noise_pixels);
      break;
    }
  }
  return rec;
}

bool in_static_window(const std::vector<ManifestEntry>& manifest, std::int64_t ts) {
  for (const auto& m : manifest) {
    if (m.label == SegmentLabel::StaticHold && ts >= m.start_us && ts <= m.end_us) return true;
  }
  return false;
}

}  // namespace

ScenarioScript ablation_script(std::uint64_t seed, const AblationTimeline& t) {
  std::mt19937_64 rng(seed ^ 0xAB1A7E);
  ScenarioScript s;
  s.events = {
      event(EventKind::SupportRemove, t.liftoff, 1.8 * jitter_factor(rng, 0.05)),
      event(EventKind::ManualPush, t.pull, 1.6 * jitter_factor(rng, 0.05), 12, 12, 2),
      event(EventKind::PressRelease, t.press, 1.2 * jitter_factor(rng, 0.05), 3, 20, 1),
      event(EventKind::ManualPush, t.push, 5.0 * jitter_factor(rng, 0.03), 12, 48, 2),
  };
  s.length = t.length;
  return s;
}

ScenarioScript liftoff_script(std::uint64_t seed, const LiftoffTimeline& t) {
  std::mt19937_64 rng(seed ^ 0x11F7);
  ScenarioScript s;
  s.events = {event(EventKind::SupportRemove, t.liftoff, t.jerk * jitter_factor(rng, 0.1))};
  s.length = t.length;
  return s;
}

const char* to_string(PourVolume v) noexcept { return v == PourVolume::Low ? "low" : "high"; }

ScenarioScript pour_script(PourVolume volume, std::uint64_t seed, const PourTimeline& t) {
  std::mt19937_64 rng(seed ^ 0x9011);
  ScenarioScript s;
  s.events = {
      event(EventKind::PourVolume, 0, volume == PourVolume::Low ? kPourLow : kPourHigh),
      event(EventKind::SupportRemove, t.liftoff, 0.2 * jitter_factor(rng, 0.2)),
      event(EventKind::TiltTrajectory, t.tilt_start, t.tilt_peak * jitter_factor(rng, 0.02), t.tilt_ramp,
            t.tilt_hold, t.tilt_return),
  };
  s.length = t.length;
  return s;
}

ProtocolPlan plan_calibration(const PlantParams& preset, std::uint64_t seed, const CalibrationProtocol& proto) {
  ProtocolPlan plan;
  plan.plant = preset;
  plan.plant.payload_mass = proto.payload_mass;
  plan.plant.water_mass = 0.0;
  plan.plant.rng_seed = seed;
  const PlantParams& p = plan.plant;
  const double weight = kGravity * (p.cup_mass + p.payload_mass);
  const double kappa = 2.0 * p.friction_mu * p.effort_to_normal;
  const double p_open = p.contact_position + 8.0;
  const double p_grip = p.contact_position - p.squeeze_saturation;
  std::mt19937_64 rng(seed ^ 0xCA1B);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> effort;  // per cycle, filled as the timeline grows
  auto set_effort = [&](std::int64_t from, double e) {
    if (static_cast<std::int64_t>(effort.size()) < from) effort.resize(static_cast<std::size_t>(from), effort.empty() ? e : effort.back());
    effort.resize(static_cast<std::size_t>(from), e);
    effort.push_back(e);
  };
  auto label = [&](SegmentLabel l, std::int64_t first, std::int64_t last) {
    plan.manifest.push_back({l, first * kCycleMicros, last * kCycleMicros});
  };
  auto& ev = plan.script.events;

  set_effort(0, proto.e_static);
  ev.push_back(event(EventKind::SupportRemove, 24, 0.2));
  std::int64_t t = 40;
  label(SegmentLabel::StaticHold, t, t + proto.static_frames - 1);
  t += proto.static_frames + 10;

  // Effort changes are kept well clear of the labeled windows so the imprint has
  // relaxed before each event. Overloads are skewed toward breakaway so the
  // gentlest labeled slips sit near the slowest slide the grip can show.
  for (int k = 0; k < proto.liftoff_events; ++k) {
    ev.push_back(event(EventKind::SupportPlace, t, 0.0));
    set_effort(t + 2, proto.liftoff_margin * weight / kappa);
    const double u = unit(rng);
    ev.push_back(event(EventKind::SupportRemove, t + 26, 0.6 + 1.0 * u * u));
    label(SegmentLabel::Liftoff, t + 26, t + 36);
    set_effort(t + 40, proto.e_static);
    t += 64;
  }
  for (int k = 0; k < proto.push_events; ++k) {
    const double u = unit(rng);
    const double overload = 1.01 + 0.49 * u * u;
    ev.push_back(event(EventKind::ManualPush, t, kappa * proto.e_static * overload - weight, 2, 3, 1));
    label(SegmentLabel::Push, t, t + 8);
    t += 16;
  }
  // Let the imprint and the background CoP reference settle at the press effort.
  set_effort(t, proto.e_press);
  t += 80;
  for (int k = 0; k < proto.press_events; ++k) {
    ev.push_back(event(EventKind::PressRelease, t, 1.2 + 1.5 * unit(rng), 3, 40, 1));
    label(SegmentLabel::PressRelease, t, t + 80);
    t += 90;
  }
  plan.script.length = t + 5;
  set_effort(plan.script.length - 1, effort.back());

  plan.commands.resize(static_cast<std::size_t>(plan.script.length));
  for (std::int64_t c = 0; c < plan.script.length; ++c) {
    const double pos = c < 2 ? p_open : std::max(p_grip, p_open - 0.5 * static_cast<double>(c - 1));
    plan.commands[static_cast<std::size_t>(c)] = {pos, effort[static_cast<std::size_t>(c)]};
  }
  return plan;
}

void append_noise_pixels(const GrayImage& frame, const GrayImage& reference, int stride, std::vector<double>& out) {
  const DiffImage diff = compute_diff(frame, reference);
  std::vector<float> probe;
  const auto px = diff.values.pixels();
  for (std::size_t i = 0; i < px.size(); i += 7) probe.push_back(px[i]);
  const double sigma = median_inplace(probe) / 0.6745;
  const ContactMask provisional = compute_contact_mask(diff, std::max(4.0 * sigma, 1.0), 1);
  const MaskImage excluded = dilate(provisional.mask, 7);
  const auto ex = excluded.pixels();
  for (std::size_t i = 0; i < px.size(); i += static_cast<std::size_t>(stride)) {
    if (!ex[i]) out.push_back(px[i]);
  }
}

CalibrationRecording simulate_calibration(const PlantParams& preset, std::uint64_t seed,
                                          const CalibrationProtocol& proto, const std::filesystem::path& stream_path) {
  const ProtocolPlan plan = plan_calibration(preset, seed, proto);
  const TactileRenderer renderer(plan.plant);

  // Pass 1: noise floor from StaticHold imagery.
  std::vector<double> noise;
  {
    PlantState state = initial_plant_state(plan.plant, plan.script);
    const std::array<GrayImage, 2> refs = {renderer.render(state, Side::Left).pixels,
                                           renderer.render(state, Side::Right).pixels};
    int static_index = 0;
    for (std::int64_t c = 0; c < plan.script.length; ++c) {
      if (in_static_window(plan.manifest, c * kCycleMicros) && static_index++ % proto.noise_frame_stride == 0) {
        for (Side s : {Side::Left, Side::Right}) {
          append_noise_pixels(renderer.render(state, s).pixels, refs[index_of(s)], proto.noise_pixel_stride, noise);
        }
      }
      GripperCommand cmd;
      std::tie(cmd.position, cmd.effort) = command_at(plan.commands, c);
      state = plant_step(state, cmd, plan.script, plan.plant);
    }
  }
  PipelineParams pipeline;
  pipeline.tau = derive_noise_floor(noise);

  // Pass 2: proxies.
  ControllerConfig config;
  config.profile.f_stop = plan.plant.f_stop;
  DriveOptions drive;
  drive.mode = DriveMode::OpenLoop;
  drive.command_schedule = [&](std::int64_t c) { return command_at(plan.commands, c); };
  std::optional<TrfxWriter> writer;
  ScenarioHooks hooks;
  if (!stream_path.empty()) {
    writer.emplace(stream_path, TrfxHeader{kTrfxVersion, static_cast<std::uint16_t>(plan.plant.height),
                                           static_cast<std::uint16_t>(plan.plant.width), 2});
    hooks.stream = &*writer;
    auto manifest_path = stream_path;
    manifest_path += ".manifest";
    write_manifest(manifest_path, plan.manifest);
  }
  const TrialRecord rec = run_scenario(plan.script, config, plan.plant, pipeline, drive, hooks);
  if (writer) writer->close();

  std::vector<ProxySample> samples;
  samples.reserve(rec.cycles.size());
  for (const auto& c : rec.cycles) samples.push_back(c.sample);
  return segment_samples(samples, plan.manifest, std::move(noise));
}

CalibrationRecording recording_from_stream(const std::filesystem::path& stream, const std::vector<ManifestEntry>& manifest,
                                           const PipelineParams& base, int noise_frame_stride, int noise_pixel_stride) {
  std::vector<double> noise;
  {
    TrfxReader reader(stream);
    if (reader.header().sensor_count != 2) throw FormatError("calibration stream needs 2 sensors", 10);
    std::optional<std::array<GrayImage, 2>> refs;
    int static_index = 0;
    while (auto r = reader.next()) {
      if (!refs) refs = std::array<GrayImage, 2>{r->frames[0], r->frames[1]};
      if (in_static_window(manifest, static_cast<std::int64_t>(r->timestamp_us)) &&
          static_index++ % noise_frame_stride == 0) {
        for (int s = 0; s < 2; ++s) append_noise_pixels(r->frames[s], (*refs)[s], noise_pixel_stride, noise);
      }
    }
  }
  bool has_static = false;
  for (const auto& m : manifest) has_static = has_static || m.label == SegmentLabel::StaticHold;
  if (!has_static) throw CalibrationError("manifest has no StaticHold segment");
  if (noise.empty()) throw CalibrationError("no stream records fall inside the StaticHold segments");

  PipelineParams pipeline = base;
  pipeline.tau = derive_noise_floor(noise);
  TactileProcessor processor(pipeline);
  std::vector<ProxySample> samples;
  TrfxReader reader(stream);
  while (auto r = reader.next()) {
    const auto ts = static_cast<std::int64_t>(r->timestamp_us);
    TactileFrame left{std::move(r->frames[0]), ts, Side::Left};
    TactileFrame right{std::move(r->frames[1]), ts, Side::Right};
    samples.push_back(processor.process(left, right));
  }
  return segment_samples(samples, manifest, std::move(noise));
}

std::vector<bool> slip_cycles(const TrialRecord& rec, double theta_s, std::int64_t begin, std::int64_t end) {
  std::vector<bool> flags;
  end = std::min<std::int64_t>(end, static_cast<std::int64_t>(rec.cycles.size()));
  for (std::int64_t c = std::max<std::int64_t>(0, begin); c < end; ++c) {
    const auto [l, r] = detect_slip(rec.cycles[static_cast<std::size_t>(c)].sample, theta_s);
    flags.push_back(l || r);
  }
  return flags;
}

int count_slip_events(const std::vector<bool>& flags) {
  int runs = 0;
  bool prev = false;
  for (bool f : flags) {
    if (f && !prev) ++runs;
    prev = f;
  }
  return runs;
}

double slip_fraction(const std::vector<bool>& flags) {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());
}

TrialMetrics compute_metrics(const TrialRecord& rec, const ControllerConfig& config, std::int64_t begin,
                             std::int64_t end, bool goal_met) {
  TrialMetrics m;
  const auto flags = slip_cycles(rec, config.profile.theta_s, begin, end);
  m.n_slip = count_slip_events(flags);
  m.slip_fraction = slip_fraction(flags);
  end = std::min<std::int64_t>(end, static_cast<std::int64_t>(rec.cycles.size()));
  double e_lo = 0.0, e_hi = 0.0;
  bool first = true;
  for (std::int64_t c = std::max<std::int64_t>(0, begin); c < end; ++c) {
    const auto& cy = rec.cycles[static_cast<std::size_t>(c)];
    m.fn_peak = std::max({m.fn_peak, cy.sample.sides[0].fn_raw, cy.sample.sides[1].fn_raw});
    m.sy_peak = std::max({m.sy_peak, cy.sample.sides[0].sy_raw, cy.sample.sides[1].sy_raw});
    e_lo = first ? cy.command.effort : std::min(e_lo, cy.command.effort);
    e_hi = first ? cy.command.effort : std::max(e_hi, cy.command.effort);
    first = false;
  }
  m.delta_e = e_hi - e_lo;
  if (!rec.cycles.empty()) {
    m.effort_residual = rec.cycles.back().command.effort - config.e_init;
    m.pose_drift = rec.cycles.back().plant.pose_drift;
  }
  m.drop = rec.outcome.dropped;
  m.deformed = rec.outcome.deformed;
  m.success = goal_met && !m.drop && !m.deformed;
  return m;
}

const char* metrics_csv_header() {
  return "n_slip,fn_peak,delta_e,slip_fraction,sy_peak,success,drop,deformed,effort_residual,pose_drift";
}

std::string metrics_csv_row(const TrialMetrics& m) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d,%d,%d,%.17g,%.17g", m.n_slip, m.fn_peak, m.delta_e,
                m.slip_fraction, m.sy_peak, m.success ? 1 : 0, m.drop ? 1 : 0, m.deformed ? 1 : 0,
                m.effort_residual, m.pose_drift);
  return buf;
}

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  std::uint64_t x = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(trial) + 1;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

PipelineParams pipeline_for(const CalibrationProfile& profile) {
  PipelineParams p;
  p.tau = profile.tau;
  p.gamma = profile.gamma;
  p.alpha = profile.alpha;
  return p;
}

ControllerConfig controller_for(const CalibrationProfile& profile, const PlantParams& plant, ChannelMask mask) {
  ControllerConfig c;
  c.profile = profile;
  c.p_open = plant.contact_position + 8.0;
  c.p_min = plant.contact_position - 6.0;
  c.channels = mask;
  return c;
}

TrialResult run_ablation_trial(const CalibrationProfile& profile, const PlantParams& preset, char config,
                               std::uint64_t seed, const ScenarioHooks& hooks) {
  PlantParams plant = preset;
  plant.payload_mass = 0.06;
  plant.water_mass = 0.0;
  plant.rng_seed = seed;
  const AblationTimeline tl;
  const ScenarioScript script = ablation_script(seed, tl);
  const ControllerConfig cfg = controller_for(profile, plant, ablation_mask(config));
  TrialResult r;
  r.seed = seed;
  r.record = run_scenario(script, cfg, plant, pipeline_for(profile), DriveOptions{}, hooks);
  const bool goal = r.record.outcome.grasped && !r.record.outcome.dropped;
  r.metrics = compute_metrics(r.record, cfg, tl.liftoff, tl.length, goal);
  return r;
}

TrialResult run_pour_trial(const CalibrationProfile& profile, const PlantParams& preset, PourVolume volume,
                           bool reflex, std::uint64_t seed, const ScenarioHooks& hooks) {
  PlantParams plant = preset;
  plant.payload_mass = 0.0;
  plant.rng_seed = seed;
  const PourTimeline tl;
  const ScenarioScript script = pour_script(volume, seed, tl);
  const ControllerConfig cfg = controller_for(profile, plant);
  DriveOptions drive;
  if (!reflex) {
    drive.mode = DriveMode::Frozen;
    drive.freeze_cycle = tl.freeze_cycle();
  }
  TrialResult r;
  r.seed = seed;
  r.record = run_scenario(script, cfg, plant, pipeline_for(profile), drive, hooks);
  r.metrics = compute_metrics(r.record, cfg, tl.tilt_start, tl.execution_end(), r.record.outcome.pour_success);
  return r;
}

TrialResult run_liftoff_trial(const CalibrationProfile& profile, const PlantParams& preset, std::uint64_t seed,
                              const ScenarioHooks& hooks) {
  PlantParams plant = preset;
  plant.payload_mass = 0.06;
  plant.water_mass = 0.0;
  plant.rng_seed = seed;
  const LiftoffTimeline tl;
  const ControllerConfig cfg = controller_for(profile, plant);
  TrialResult r;
  r.seed = seed;
  r.record = run_scenario(liftoff_script(seed, tl), cfg, plant, pipeline_for(profile), DriveOptions{}, hooks);
  r.metrics = compute_metrics(r.record, cfg, tl.liftoff, tl.length, r.record.outcome.grasped);
  return r;
}

namespace {

template <typename RunOne>
std::vector<TrialResult> run_trials(const std::string& stem, const ExperimentOptions& opts,
                                    const CalibrationProfile& profile, RunOne run_one) {
  std::vector<TrialResult> results;
  std::optional<std::ofstream> metrics;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics.emplace(opts.out_dir / (stem + "_metrics.csv"), std::ios::trunc);
    *metrics << metrics_csv_header() << '\n';
  }
  for (int k = 0; k < opts.trials; ++k) {
    const std::uint64_t seed = trial_seed(opts.seed, k);
    ScenarioHooks hooks;
    std::optional<CommandLog> log;
    std::optional<TrfxWriter> stream;
    if (!opts.out_dir.empty()) {
      const std::string base = stem + "_trial" + std::to_string(k);
      log.emplace(opts.out_dir / (base + ".csv"));
      hooks.log = &*log;
      if (opts.write_streams) {
        stream.emplace(opts.out_dir / (base + ".trfx"), TrfxHeader{});
        hooks.stream = &*stream;
      }
    }
    results.push_back(run_one(seed, hooks));
    if (metrics) *metrics << metrics_csv_row(results.back().metrics) << '\n';
  }
  (void)profile;
  return results;
}

}  // namespace

std::vector<TrialResult> run_ablation(const CalibrationProfile& profile, const PlantParams& preset, char config,
                                      const ExperimentOptions& opts) {
  return run_trials(std::string("ablate_") + config, opts, profile, [&](std::uint64_t seed, const ScenarioHooks& h) {
    return run_ablation_trial(profile, preset, config, seed, h);
  });
}

std::vector<TrialResult> run_pour(const CalibrationProfile& profile, const PlantParams& preset, PourVolume volume,
                                  bool reflex, const ExperimentOptions& opts) {
  const std::string stem = std::string("pour_") + to_string(volume) + (reflex ? "_on" : "_off");
  return run_trials(stem, opts, profile, [&](std::uint64_t seed, const ScenarioHooks& h) {
    return run_pour_trial(profile, preset, volume, reflex, seed, h);
  });
}

std::vector<ReplayCycle> replay_stream(const std::filesystem::path& stream, const ControllerConfig& config,
                                       const PipelineParams& pipeline, std::int64_t grasp_start, CommandLog* log) {
  validate_config(config);
  TrfxReader reader(stream);
  if (reader.header().sensor_count != 2) {
    throw FormatError("replay needs a 2-sensor stream, header declares " +
                          std::to_string(reader.header().sensor_count),
                      10);
  }
  TactileProcessor processor(pipeline);
  ControllerState ctrl = initial_state(config);
  std::vector<ReplayCycle> out;
  for (std::int64_t c = 0; auto r = reader.next(); ++c) {
    if (c == grasp_start && ctrl.phase == Phase::Idle) ctrl = begin_grasp(ctrl, config);
    const auto ts = static_cast<std::int64_t>(r->timestamp_us);
    const TactileFrame left{std::move(r->frames[0]), ts, Side::Left};
    const TactileFrame right{std::move(r->frames[1]), ts, Side::Right};
    const ProxySample sample = processor.process(left, right, ctrl.phase == Phase::Idle);
    GripperCommand cmd;
    std::tie(cmd, ctrl) = step(ctrl, sample, config);
    if (log) log->append(sample, cmd, ctrl);
    out.push_back({sample, cmd, ctrl});
  }
  return out;
}

}  // namespace trex
