#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trex/controller.hpp"
#include "trex/pipeline.hpp"
#include "trex/tactile_processor.hpp"

namespace trex {

class TrfxWriter;

inline constexpr double kCycleSeconds = 1.0 / 12.0;
inline constexpr std::int64_t kCycleMicros = 83'333;
inline constexpr double kGravity = 9.81;

/// Phenomenological gripper/cup parameters. Forces are in newtons, efforts in
/// gripper units, lengths on the sensor in pixels, angles in radians.
struct PlantParams {
  std::string name = "soft_cup";

  // Cup and load.
  double cup_mass = 0.0045;
  double water_mass = 0.0;
  double payload_mass = 0.0;       // solid load: adds weight, not wall support
  double wall_crush_effort = 3600.0;
  double liquid_support = 20000.0;  // crush effort gained per kg of water
  int crush_dwell = 84;
  double creep_margin = 1200.0;     // creep sets in this far above the crush effort
  double creep_rate = 0.12;         // px/cycle wall creep while over the creep effort

  // Grip.
  double friction_mu = 0.5;
  double effort_to_normal = 1e-3;
  double contact_position = 60.0;   // stroke at first touch
  double squeeze_saturation = 1.0;  // stroke past first touch for full force
  double asymmetry = 1.5;
  double slip_v0 = 0.3;             // breakaway slide speed, px/cycle
  double slip_gain = 1.5;           // px/cycle per unit of load/capacity excess
  double slip_vmax = 3.0;
  double drift_per_px = 0.0349;     // rad of pose drift per px of slide
  double drop_ratio = 2.5;          // translational load / capacity that tears the cup out
  double torque_gain = 3.0;         // tilt moment per unit water weight
  double jerk_tau = 3.0;            // cycles

  // Contact imprint.
  double cop_center_y = 180.0;
  double tilt_gain = 0.5;           // imprint pressure-gradient per N of carried load
  double tilt_rate = 0.25;          // max gradient change per cycle
  double tilt_max = 3.5;
  double press_coupling = 150.0;    // effort-equivalent squeeze per N of press
  double contact_rate = 0.06;       // max fractional imprint-area change per cycle (gel relaxation)
  double effort_ref = 1200.0;
  double contact_area_ref = 6000.0; // px per side at effort_ref, symmetric split
  double contact_aspect = 1.2;
  double area_exponent = 0.5;       // imprint area ~ pressure^a
  double depth_exponent = 0.3333;   // imprint depth ~ pressure^d; a + 1.5 d = 1 keeps F_n ~ pressure
  double contact_amplitude = 30.0;
  double texture_floor = 0.45;
  double background_level = 60.0;

  // Sensor noise.
  double speckle_density = 4500.0;  // dots per image
  double pixel_noise_sigma = 1.5;
  double jitter_sigma = 0.025;      // px per frame
  double target_sy_noise_p95 = 0.07;

  // Pouring.
  double pour_angle = 1.309;        // 75 deg
  double pour_rate = 0.03;          // kg/s
  double alignment_tolerance = 0.2618;  // 15 deg

  // Operator-facing grasp stop for this cup (not derived by calibration).
  double f_stop = 0.9;

  int height = kSensorHeight;
  int width = kSensorWidth;
  std::uint64_t rng_seed = 1;

  bool operator==(const PlantParams&) const = default;
};

PlantParams soft_cup_preset();
PlantParams hard_cup_preset();
/// "soft" / "hard" (or the full preset names).
PlantParams preset_by_name(const std::string& name);

/// Throws std::invalid_argument when parameters are out of range or the preset is
/// not self-consistent (holding at e_init must not slip or crush).
void validate_plant(const PlantParams& params, double e_init);

std::string plant_to_json(const PlantParams& params);
PlantParams plant_from_json(const std::string& text);
void save_plant(const std::filesystem::path& path, const PlantParams& params);
PlantParams load_plant(const std::filesystem::path& path);

struct PlantState {
  std::int64_t cycle = 0;
  double tilt = 0.0;
  double slip_offset = 0.0;
  double creep_offset = 0.0;
  double slip_velocity = 0.0;
  double pose_drift = 0.0;
  double water_remaining = 0.0;
  bool supported = true;
  bool deformed = false;
  bool dropped = false;
  int over_crush_cycles = 0;
  double load = 0.0;        // tangential demand on the grip, N
  double capacity = 0.0;    // friction capacity, N
  std::array<double, 2> pressure{};  // effort-equivalent squeeze per side
  double imprint_tilt = 0.0;  // log-pressure gradient along y across the imprint
  bool operator==(const PlantState&) const = default;
};

enum class EventKind { SupportRemove, SupportPlace, ManualPush, PressRelease, TiltTrajectory, PourVolume };
const char* to_string(EventKind kind) noexcept;

/// Timed script event. Ramp/hold/release are in cycles; magnitude is N for
/// pushes and presses, radians for tilt, kg for pour volume, jerk gain for
/// SupportRemove.
struct ScenarioEvent {
  EventKind kind = EventKind::SupportRemove;
  std::int64_t start = 0;
  double magnitude = 0.0;
  int ramp = 0;
  int hold = 0;
  int release = 0;
  bool operator==(const ScenarioEvent&) const = default;
};

struct ScenarioScript {
  std::vector<ScenarioEvent> events;
  std::int64_t length = 0;  // cycles
};

inline constexpr double kPourLow = 0.045;
inline constexpr double kPourHigh = 0.090;

/// Throws std::invalid_argument if events are unordered, overlapping tilts exist
/// or a field is out of range.
void validate_script(const ScenarioScript& script);

/// Trapezoid envelope in [0, 1] for an event at `cycle`.
double event_envelope(const ScenarioEvent& e, std::int64_t cycle);

struct ExternalLoads {
  bool supported = true;
  double jerk = 0.0;   // multiplier of weight, decays after liftoff
  double push = 0.0;
  double press = 0.0;
  double tilt = 0.0;
};
ExternalLoads loads_at(const ScenarioScript& script, std::int64_t cycle, const PlantParams& params);

double crush_effort(const PlantParams& p, double water);
double creep_effort(const PlantParams& p, double water);

PlantState initial_plant_state(const PlantParams& params, const ScenarioScript& script);

/// Advances one cycle under `command`, with loads evaluated at state.cycle + 1.
PlantState plant_step(const PlantState& state, const GripperCommand& command, const ScenarioScript& script,
                      const PlantParams& params);

/// Synthetic sensor imagery: fixed background, noise table and speckle tile.
class TactileRenderer {
 public:
  explicit TactileRenderer(const PlantParams& params);
  TactileFrame render(const PlantState& state, Side side) const;
  [[nodiscard]] const PlantParams& params() const noexcept { return params_; }

 private:
  double jitter(Side side, std::int64_t cycle) const;

  PlantParams params_;
  std::array<FloatImage, 2> background_;
  FloatImage tile_;
  std::vector<float> noise_;
};

TactileFrame render_tactile(const PlantState& state, Side side, const PlantParams& params);

// Closed loop.

enum class DriveMode { Reflex, Frozen, OpenLoop };

struct DriveOptions {
  DriveMode mode = DriveMode::Reflex;
  std::int64_t grasp_start = 2;
  /// Frozen: (effort, position) at this cycle are locked from then on.
  std::int64_t freeze_cycle = -1;
  /// OpenLoop: (position, effort) per cycle; the controller is not consulted.
  std::function<std::pair<double, double>(std::int64_t)> command_schedule;
};

struct TrialCycle {
  ProxySample sample;
  GripperCommand command;
  ControllerState controller;
  PlantState plant;  // state the frames were rendered from
};

struct TrialOutcome {
  bool grasped = false;
  bool dropped = false;
  bool deformed = false;
  double water_poured = 0.0;
  bool pour_success = false;
};

struct TrialRecord {
  std::vector<TrialCycle> cycles;
  TrialOutcome outcome;
  std::optional<std::int64_t> hold_cycle;   // first Holding cycle
  double initial_water = 0.0;
};

struct ScenarioHooks {
  TrfxWriter* stream = nullptr;
  CommandLog* log = nullptr;
  /// Called with each rendered pair before processing.
  std::function<void(const PlantState&, const TactileFrame&, const TactileFrame&)> on_frames;
};

TrialRecord run_scenario(const ScenarioScript& script, const ControllerConfig& config, const PlantParams& params,
                         const PipelineParams& pipeline, const DriveOptions& drive, const ScenarioHooks& hooks = {});

}  // namespace trex
