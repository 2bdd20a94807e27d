#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trex/calibration.hpp"
#include "trex/controller.hpp"
#include "trex/plant.hpp"

namespace trex {

// Standard scripts. `seed` perturbs event magnitudes by a few percent.

struct AblationTimeline {
  std::int64_t liftoff = 30;
  std::int64_t pull = 60;
  std::int64_t press = 100;
  std::int64_t push = 135;
  std::int64_t length = 270;
};
ScenarioScript ablation_script(std::uint64_t seed, const AblationTimeline& t = {});

struct LiftoffTimeline {
  std::int64_t liftoff = 30;
  std::int64_t length = 50;
  double jerk = 1.8;
};
ScenarioScript liftoff_script(std::uint64_t seed, const LiftoffTimeline& t = {});

enum class PourVolume { Low, High };
const char* to_string(PourVolume v) noexcept;

struct PourTimeline {
  std::int64_t liftoff = 30;
  std::int64_t settle = 24;       // cycles between liftoff and recording (e_grasp, p_grasp)
  std::int64_t tilt_start = 56;
  int tilt_ramp = 60;
  int tilt_hold = 48;
  int tilt_return = 36;
  double tilt_peak = 1.658;       // 95 deg
  std::int64_t length = 210;
  [[nodiscard]] std::int64_t freeze_cycle() const { return liftoff + settle; }
  [[nodiscard]] std::int64_t execution_end() const { return tilt_start + tilt_ramp + tilt_hold + tilt_return; }
};
ScenarioScript pour_script(PourVolume volume, std::uint64_t seed, const PourTimeline& t = {});

// Calibration protocol: open-loop static hold, liftoff and push slip events, then
// load/unload press events at raised effort.

struct CalibrationProtocol {
  int static_frames = 3000;
  int liftoff_events = 12;
  int push_events = 12;
  int press_events = 10;
  double e_static = 2400.0;
  double liftoff_margin = 1.58;  // grip capacity over payload weight while lifting
  double e_press = 4000.0;
  double payload_mass = 0.06;
  int noise_frame_stride = 5;   // every n-th StaticHold frame contributes diff pixels
  int noise_pixel_stride = 101;
};

struct ProtocolPlan {
  ScenarioScript script;
  std::vector<ManifestEntry> manifest;   // timestamps in microseconds
  std::vector<std::pair<double, double>> commands;  // (position, effort) per cycle
  PlantParams plant;
};
ProtocolPlan plan_calibration(const PlantParams& preset, std::uint64_t seed, const CalibrationProtocol& proto = {});

/// ΔI pixels that belong to sensor noise: a robust provisional threshold marks
/// contact, which is opened and dilated away before sampling every `stride`-th pixel.
void append_noise_pixels(const GrayImage& frame, const GrayImage& reference, int stride, std::vector<double>& out);

/// Runs the protocol in simulation. Two passes: the first derives the noise floor
/// from StaticHold frames, the second extracts proxies with it.
/// When `stream_path` is set the frames of the second pass are written there and
/// the manifest next to it.
CalibrationRecording simulate_calibration(const PlantParams& preset, std::uint64_t seed,
                                          const CalibrationProtocol& proto = {},
                                          const std::filesystem::path& stream_path = {});

/// Builds a recording from a TRFX stream and manifest (same two passes).
CalibrationRecording recording_from_stream(const std::filesystem::path& stream,
                                           const std::vector<ManifestEntry>& manifest,
                                           const PipelineParams& pipeline = {},
                                           int noise_frame_stride = 5, int noise_pixel_stride = 101);

// Metrics.

struct TrialMetrics {
  int n_slip = 0;
  double fn_peak = 0.0;
  double delta_e = 0.0;
  double slip_fraction = 0.0;
  double sy_peak = 0.0;
  bool success = false;
  bool drop = false;
  bool deformed = false;
  double effort_residual = 0.0;  // final effort minus e_init
  double pose_drift = 0.0;       // in-hand rotation at the end of the trial, rad
};

/// Per-cycle slip flags (either side, contact-gated raw S_y >= theta_s) over [begin, end).
std::vector<bool> slip_cycles(const TrialRecord& rec, double theta_s, std::int64_t begin, std::int64_t end);
/// Maximal runs of consecutive true flags.
int count_slip_events(const std::vector<bool>& flags);
double slip_fraction(const std::vector<bool>& flags);

TrialMetrics compute_metrics(const TrialRecord& rec, const ControllerConfig& config, std::int64_t begin,
                             std::int64_t end, bool goal_met);

const char* metrics_csv_header();
std::string metrics_csv_row(const TrialMetrics& m);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};
MeanSd mean_sd(const std::vector<double>& values);

// Experiments.

struct ExperimentOptions {
  std::uint64_t seed = 1;
  int trials = 5;
  std::filesystem::path out_dir;   // empty: nothing written
  bool write_streams = false;
};

struct TrialResult {
  TrialRecord record;
  TrialMetrics metrics;
  std::uint64_t seed = 0;
};

std::uint64_t trial_seed(std::uint64_t seed, int trial);

PipelineParams pipeline_for(const CalibrationProfile& profile);
ControllerConfig controller_for(const CalibrationProfile& profile, const PlantParams& plant, ChannelMask mask = {});

TrialResult run_ablation_trial(const CalibrationProfile& profile, const PlantParams& preset, char config,
                               std::uint64_t seed, const ScenarioHooks& hooks = {});
TrialResult run_pour_trial(const CalibrationProfile& profile, const PlantParams& preset, PourVolume volume,
                           bool reflex, std::uint64_t seed, const ScenarioHooks& hooks = {});
TrialResult run_liftoff_trial(const CalibrationProfile& profile, const PlantParams& preset, std::uint64_t seed,
                              const ScenarioHooks& hooks = {});

std::vector<TrialResult> run_ablation(const CalibrationProfile& profile, const PlantParams& preset, char config,
                                      const ExperimentOptions& opts);
std::vector<TrialResult> run_pour(const CalibrationProfile& profile, const PlantParams& preset, PourVolume volume,
                                  bool reflex, const ExperimentOptions& opts);

struct ReplayCycle {
  ProxySample sample;
  GripperCommand command;
  ControllerState controller;
};

/// Runs the perception path and controller over a recorded two-sensor stream,
/// open-loop against the recording. The grasp starts at `grasp_start` as in a
/// closed-loop reflex trial, so a trial's own stream reproduces its command log.
std::vector<ReplayCycle> replay_stream(const std::filesystem::path& stream, const ControllerConfig& config,
                                       const PipelineParams& pipeline, std::int64_t grasp_start = 2,
                                       CommandLog* log = nullptr);

}  // namespace trex
