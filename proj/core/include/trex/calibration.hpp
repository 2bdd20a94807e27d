#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trex/pipeline.hpp"

namespace trex {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Slip-threshold interval is empty: the noise ceiling lies above the weakest slip.
class CalibrationInfeasible : public CalibrationError {
 public:
  CalibrationInfeasible(double noise_p999, double min_slip_peak);
  double noise_p999;
  double min_slip_peak;
};

enum class SegmentLabel { StaticHold, Liftoff, Push, PressRelease };

const char* to_string(SegmentLabel label) noexcept;
SegmentLabel parse_segment_label(const std::string& text);

/// One line of the sidecar manifest: `label start_us end_us` (inclusive window).
struct ManifestEntry {
  SegmentLabel label = SegmentLabel::StaticHold;
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct CalibrationSegment {
  SegmentLabel label = SegmentLabel::StaticHold;
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::vector<ProxySample> samples;
  std::vector<double> diff_pixel_samples;
};

struct CalibrationRecording {
  std::vector<CalibrationSegment> segments;
};

struct Provenance {
  std::string method;                 // "percentile", "interval-rule", "event-rounding", "manual", "fixed"
  std::optional<double> percentile;   // when method == "percentile"
  std::size_t sample_count = 0;
  bool operator==(const Provenance&) const = default;
};

struct CalibrationProfile {
  double tau = 0.0;
  double theta_s = 0.0;
  double theta_q = 0.0;
  double theta_c = 0.0;
  double f_lim = 0.0;
  double f_stop = 0.0;
  double gamma = 1.5;
  double alpha = 0.3;
  std::string material_label;
  std::map<std::string, Provenance> provenance;
  std::int64_t created_at = 0;  // recording end timestamp, keeps profile files reproducible

  bool operator==(const CalibrationProfile&) const = default;
};

/// Throws CalibrationError if an invariant is violated.
void validate_profile(const CalibrationProfile& profile);

struct FixedParameters {
  double gamma = 1.5;
  double alpha = 0.3;
  double f_stop = 1.3;
  double alpha_bg = 0.02;  // CoP background rate, used to extract release extrema
};

// Threshold derivations.

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample (rank >= 1).
double percentile(std::span<const double> samples, double p);

double derive_noise_floor(std::span<const double> diff_pixels);
double derive_quiet_threshold(std::span<const double> sy_noise);
double derive_force_limit(std::span<const double> fn_samples);
/// floor(min peak, 0.01), never below P99.9 of the noise.
double derive_slip_threshold(std::span<const double> sy_noise, std::span<const double> slip_peaks);
/// Least-negative extremum rounded toward zero on a 0.5 px grid.
double derive_cop_threshold(std::span<const double> release_events);

// Sample extraction from a recording.

/// Contact-gated raw S_y over StaticHold samples, both sides pooled.
std::vector<double> static_sy_noise(const CalibrationRecording& rec);
/// Per-cycle max(F_n^L, F_n^R) over StaticHold and PressRelease samples.
std::vector<double> force_samples(const CalibrationRecording& rec);
/// Max contact-gated raw S_y within each Liftoff/Push segment.
std::vector<double> slip_peaks(const CalibrationRecording& rec);
/// Minimum of (mean CoP y - background reference) within each PressRelease segment.
/// The reference follows every sample with a mean CoP at rate `alpha_bg`.
std::vector<double> release_extrema(const CalibrationRecording& rec, double alpha_bg);

struct SlipRuleCheck {
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t events = 0;
  std::size_t static_frames = 0;
};
/// Classifies labeled events (peak >= theta) and static frames (any gated side >= theta).
SlipRuleCheck check_slip_rule(const CalibrationRecording& rec, double theta_s);

CalibrationProfile run_calibration(const CalibrationRecording& recording, const FixedParameters& fixed,
                                   const std::string& material_label);

// Profile documents (JSON).
std::string profile_to_json(const CalibrationProfile& profile);
CalibrationProfile profile_from_json(const std::string& text);
void save_profile(const std::filesystem::path& path, const CalibrationProfile& profile);
CalibrationProfile load_profile(const std::filesystem::path& path);

}  // namespace trex
