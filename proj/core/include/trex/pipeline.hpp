#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "trex/flow.hpp"
#include "trex/image.hpp"

namespace trex {

inline constexpr int kSensorHeight = 480;
inline constexpr int kSensorWidth = 640;

enum class Side : std::uint8_t { Left = 0, Right = 1 };

inline constexpr std::size_t index_of(Side s) noexcept { return static_cast<std::size_t>(s); }
inline constexpr const char* to_string(Side s) noexcept { return s == Side::Left ? "L" : "R"; }

struct TactileFrame {
  GrayImage pixels;
  std::int64_t timestamp_us = 0;
  Side side = Side::Left;
};

struct ReferenceFrame {
  GrayImage pixels;
  std::int64_t captured_at = 0;
};

/// |I_t - I_ref| kept at float precision.
struct DiffImage {
  FloatImage values;
};

struct ContactMask {
  MaskImage mask;  // 0 or 1
  int support_count = 0;
  bool valid = false;
};

struct WeightMap {
  DoubleImage weights;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Per-side proxy bundle for one control cycle.
struct SideProxy {
  double fn_raw = 0.0;
  double sy_raw = 0.0;
  std::optional<Point2> cop;
  bool contact_valid = false;
  int support_count = 0;
  double fn_ema = 0.0;
  double sy_ema = 0.0;
  bool operator==(const SideProxy&) const = default;
};

struct ProxySample {
  std::int64_t timestamp_us = 0;
  std::array<SideProxy, 2> sides{};
  double sy_max_ema = 0.0;
  double fn_max_ema = 0.0;
  std::optional<double> mean_cop_y;

  SideProxy& operator[](Side s) noexcept { return sides[index_of(s)]; }
  const SideProxy& operator[](Side s) const noexcept { return sides[index_of(s)]; }
  bool operator==(const ProxySample&) const = default;
};

/// Raw per-side measurements produced in a cycle, before filtering.
struct SideInputs {
  double fn_raw = 0.0;
  double sy_raw = 0.0;
  std::optional<Point2> cop;
  bool contact_valid = false;
  int support_count = 0;
};

// Pure per-frame operations.

DiffImage compute_diff(const GrayImage& frame, const GrayImage& ref);
inline DiffImage compute_diff(const TactileFrame& frame, const ReferenceFrame& ref) {
  return compute_diff(frame.pixels, ref.pixels);
}

/// Threshold at `tau`, then 3x3 opening (erode, dilate). Out-of-image pixels are
/// treated as background by the erosion and ignored by the dilation.
ContactMask compute_contact_mask(const DiffImage& diff, double tau, int n_min);

WeightMap compute_weights(const DiffImage& diff, const ContactMask& mask, double gamma);

/// Mean weight over every pixel of the image (dimensionless contact intensity).
double compute_fn(const WeightMap& weights);

/// Weighted centroid in pixel coordinates; empty when the total weight is zero.
std::optional<Point2> compute_cop(const WeightMap& weights);

std::optional<double> mean_vertical_cop(const std::optional<Point2>& cop_left,
                                        const std::optional<Point2>& cop_right, bool valid_left,
                                        bool valid_right);

/// Median of |v_y| over the mask support; 0 when the mask is invalid.
double compute_sy(const FlowField& flow, const ContactMask& mask);

/// Median of a scratch buffer (reorders it). Upper-middle convention is not used:
/// even counts average the two middle elements.
double median_inplace(std::span<float> values);

constexpr double ema_update(double prev, double raw, double alpha) noexcept {
  return alpha * raw + (1.0 - alpha) * prev;
}

/// Updates per-side EMAs and cross-sensor aggregates. With no previous sample the
/// EMAs are seeded with the raw values.
ProxySample assemble_proxy_sample(const SideInputs& left, const SideInputs& right,
                                  const ProxySample* previous, double alpha,
                                  std::int64_t timestamp_us = 0);

}  // namespace trex
