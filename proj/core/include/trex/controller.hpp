#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>

#include "trex/calibration.hpp"
#include "trex/pipeline.hpp"

namespace trex {

struct ChannelMask {
  bool slip = true;
  bool release = true;
  bool protect = true;
  bool operator==(const ChannelMask&) const = default;
};

/// Ablation configurations A-D.
ChannelMask ablation_mask(char config);

struct ControllerConfig {
  CalibrationProfile profile;
  double e_init = 1200.0;
  double e_max = 5000.0;
  double p_min = 0.0;
  double p_open = 85.0;
  double closing_step = 0.5;
  double de_slip = 300.0;
  double de_prot = 400.0;
  double de_rel = 300.0;
  double dp_slip = 0.1;
  double dp_prot = 0.15;
  double dp_rel = 0.15;
  double dp_max = 3.0;
  double alpha_bg = 0.02;
  double alpha_rel = 0.3;
  ChannelMask channels;
};

/// Throws std::invalid_argument on violated invariants.
void validate_config(const ControllerConfig& config);

enum class Phase : std::uint8_t { Idle, Closing, Holding };
const char* to_string(Phase phase) noexcept;

enum class Channel : std::uint8_t { Slip = 1, Release = 2, Protect = 4 };

struct FiredSet {
  std::uint8_t bits = 0;
  void add(Channel c) noexcept { bits |= static_cast<std::uint8_t>(c); }
  [[nodiscard]] bool has(Channel c) const noexcept { return (bits & static_cast<std::uint8_t>(c)) != 0; }
  [[nodiscard]] bool empty() const noexcept { return bits == 0; }
  bool operator==(const FiredSet&) const = default;
};
/// "Slip|Protect" style, empty string for no channel.
std::string to_string(FiredSet fired);

struct ControllerState {
  Phase phase = Phase::Idle;
  double effort = 0.0;
  double position = 0.0;
  std::optional<double> p_hold;
  std::optional<double> cop_ref;
  double cumulative_dp_slip = 0.0;
  std::int64_t cycle_index = 0;
  bool operator==(const ControllerState&) const = default;
};

struct GripperCommand {
  std::int64_t cycle = 0;
  double position = 0.0;
  double effort = 0.0;
  FiredSet fired;
  Phase phase = Phase::Idle;
  bool grasp_failure = false;
  bool operator==(const GripperCommand&) const = default;
};

ControllerState initial_state(const ControllerConfig& config);
/// Idle -> Closing from the fully open stroke at e_init.
ControllerState begin_grasp(ControllerState state, const ControllerConfig& config);

std::pair<bool, bool> detect_slip(const ProxySample& sample, double theta_s);

ControllerState apply_antislip(ControllerState state, const ControllerConfig& config);
ControllerState apply_release(ControllerState state, const ProxySample& sample, const ControllerConfig& config);
ControllerState apply_protect(ControllerState state, const ControllerConfig& config);
ControllerState update_cop_reference_background(ControllerState state, const ProxySample& sample,
                                                const ControllerConfig& config);

/// True when dual contact, an initialized reference, quiet shear and a CoP drop all hold.
bool release_preconditions(const ControllerState& state, const ProxySample& sample, const ControllerConfig& config);

struct ClosingResult {
  ControllerState state;
  bool grasp_failure = false;
};
ClosingResult step_closing(ControllerState state, const ProxySample& sample, const ControllerConfig& config);

std::pair<GripperCommand, ControllerState> step(ControllerState state, const ProxySample& sample,
                                                const ControllerConfig& config);

/// Per-cycle CSV trace of commands and the proxies that produced them.
class CommandLog {
 public:
  explicit CommandLog(const std::filesystem::path& path);
  void append(const ProxySample& sample, const GripperCommand& command, const ControllerState& state);
  static const char* header();
  /// One row without trailing newline.
  static std::string format_row(const ProxySample& sample, const GripperCommand& command,
                                const ControllerState& state);

 private:
  std::ofstream out_;
};

// Controller configuration documents reference the profile by path.
void save_controller_config(const std::filesystem::path& path, const ControllerConfig& config,
                            const std::filesystem::path& profile_path);
ControllerConfig load_controller_config(const std::filesystem::path& path);

}  // namespace trex
