#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trex/calibration.hpp"
#include "trex/experiments.hpp"
#include "trex/plant.hpp"

namespace trex::cli {

enum ExitCode : int { kExitOk = 0, kExitTaskFailure = 1, kExitUsage = 2 };

/// Bad arguments or unreadable input; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::optional<std::filesystem::path> profile;
  std::string preset = "soft";   // preset name or path to a plant JSON document
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "trex_out";
  int trials = 5;
};

PlantParams resolve_preset(const std::string& name_or_path);
/// --profile when given, otherwise `<out_dir>/<preset>_profile.json`.
std::filesystem::path profile_path(const GlobalOptions& global, const PlantParams& plant);
CalibrationProfile require_profile(const GlobalOptions& global, const PlantParams& plant);

struct CalibrateOptions {
  int static_frames = 3000;
  std::optional<std::filesystem::path> stream;    // calibrate from a recording instead of simulating
  std::optional<std::filesystem::path> manifest;  // defaults to `<stream>.manifest`
  bool write_stream = false;                      // keep the simulated recording
  std::optional<std::string> material;            // profile label, defaults to the preset name
  std::optional<double> f_stop;                   // defaults to the preset's grasp stop
  std::optional<std::filesystem::path> out;       // profile path, overrides --profile
};

/// Provenance table for a profile, one row per threshold.
std::string provenance_table(const CalibrationProfile& profile);

int cmd_calibrate(const GlobalOptions& global, const CalibrateOptions& opts, std::ostream& out);

struct AblateOptions {
  std::string configs = "ABCD";
  bool write_streams = false;
};
/// Sign changes between consecutive nonzero effort steps while Holding.
int count_effort_reversals(const TrialRecord& record);
int cmd_ablate(const GlobalOptions& global, const AblateOptions& opts, std::ostream& out);

struct PourOptions {
  std::vector<PourVolume> volumes{PourVolume::Low, PourVolume::High};
  std::vector<bool> reflex{false, true};
  bool write_streams = false;
};
int cmd_pour(const GlobalOptions& global, const PourOptions& opts, std::ostream& out);

struct ReplayOptions {
  std::filesystem::path stream;
  std::optional<std::filesystem::path> output;  // defaults to `<out_dir>/<stream stem>_replay.csv`
  std::int64_t grasp_start = 2;
};
int cmd_replay(const GlobalOptions& global, const ReplayOptions& opts, std::ostream& out);

struct BenchOptions {
  int cycles = 200;
  int width = kSensorWidth;
  int height = kSensorHeight;
  int warmup = 5;
};
struct BenchReport {
  int cycles = 0;
  int width = 0;
  int height = 0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
};
/// Times processor + controller on pre-rendered frame pairs from a held grasp
/// with a slip event. Rendering is outside the timed region.
BenchReport run_bench(const BenchOptions& opts, std::uint64_t seed);
int cmd_bench(const GlobalOptions& global, const BenchOptions& opts, std::ostream& out);

struct PlotOptions {
  std::filesystem::path log;                    // command-log CSV
  std::optional<std::filesystem::path> prefix;  // defaults to `<out_dir>/<log stem>`
};
/// Writes `<prefix>_{sy,effort,position,fn,cop}.svg`. Returns the file paths.
std::vector<std::filesystem::path> write_plots(const std::filesystem::path& log,
                                               const std::filesystem::path& prefix,
                                               const std::optional<CalibrationProfile>& profile);
int cmd_plot(const GlobalOptions& global, const PlotOptions& opts, std::ostream& out);

/// Writes `<out_dir>/<command>_summary.json`.
void write_summary(const std::filesystem::path& out_dir, const std::string& command, const std::string& json_text);

/// Parses argv and dispatches. Never throws; errors go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trex::cli
