#pragma once

#include <vector>

#include "trex/image.hpp"

namespace trex {

/// Dense per-pixel displacement from the previous to the current frame (px/frame).
struct FlowField {
  FloatImage vx;
  FloatImage vy;
};

/// Farneback polynomial-expansion flow settings.
///
/// `finest_level` selects the pyramid level at which the last refinement runs;
/// the result is bilinearly upsampled back to the input resolution. Level 0 is the
/// input itself, level 1 is half resolution, and so on. `levels` counts the
/// working levels starting at `finest_level`.
struct FarnebackParams {
  int levels = 3;
  int window = 15;
  int iterations = 3;
  int poly_n = 7;
  double poly_sigma = 1.5;
  int finest_level = 1;
};

/// Six-coefficient quadratic fit per pixel, stored as separate planes.
struct PolyExpansion {
  FloatImage bx, by, axx, ayy, axy;
};

/// Pyramid of polynomial expansions for one frame.
struct ExpandedFrame {
  std::vector<PolyExpansion> levels;  // index 0 = finest working level
  int height = 0;
  int width = 0;
};

class FarnebackFlow {
 public:
  explicit FarnebackFlow(FarnebackParams params = {});

  [[nodiscard]] const FarnebackParams& params() const noexcept { return params_; }

  /// Expands `frame` into the working pyramid. Pure; reusable across calls.
  [[nodiscard]] ExpandedFrame expand(const GrayImage& frame) const;

  /// Flow between two pre-expanded frames.
  [[nodiscard]] FlowField estimate(const ExpandedFrame& prev, const ExpandedFrame& curr) const;

  [[nodiscard]] FlowField estimate(const GrayImage& prev, const GrayImage& curr) const;

 private:
  FarnebackParams params_;
  std::vector<float> g_, xg_, xxg_;
  float ig11_ = 0, ig03_ = 0, ig33_ = 0, ig55_ = 0;
};

/// Stateless convenience wrapper with default parameters.
FlowField estimate_flow(const GrayImage& prev, const GrayImage& curr,
                        const FarnebackParams& params = {});

namespace detail {
/// 2x Gaussian downsample ([1 4 6 4 1]/16 separable, reflected borders).
FloatImage pyr_down(const FloatImage& src);
PolyExpansion poly_expand(const FloatImage& src, int n, const std::vector<float>& g,
                          const std::vector<float>& xg, const std::vector<float>& xxg,
                          float ig11, float ig03, float ig33, float ig55);
}  // namespace detail

}  // namespace trex
