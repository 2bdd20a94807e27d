#pragma once

#include <array>
#include <optional>

#include "trex/flow.hpp"
#include "trex/pipeline.hpp"

namespace trex {

struct PipelineParams {
  double tau = 5.0;
  int n_min = 50;
  double gamma = 1.5;
  double alpha = 0.3;
  int reference_refresh_frames = 30;
  FarnebackParams flow{};
};

/// Per-cycle proxy extraction for a left/right sensor pair.
///
/// Holds the only state of the perception path: the no-contact references, the
/// previous frame's flow expansion per side, and the previous ProxySample for the
/// EMA chain. The first frame seen on a side becomes its reference.
class TactileProcessor {
 public:
  explicit TactileProcessor(PipelineParams params = {});

  [[nodiscard]] const PipelineParams& params() const noexcept { return params_; }

  void set_reference(Side side, ReferenceFrame ref);
  [[nodiscard]] const std::optional<ReferenceFrame>& reference(Side side) const noexcept {
    return refs_[index_of(side)];
  }

  /// Processes one synchronized pair. `allow_reference_refresh` is true when the
  /// controller is Idle; after `reference_refresh_frames` consecutive no-contact
  /// frames on a side, that side's reference is re-captured.
  ProxySample process(const TactileFrame& left, const TactileFrame& right,
                      bool allow_reference_refresh = false);

  [[nodiscard]] const std::optional<ProxySample>& last_sample() const noexcept { return last_; }

  void reset();

 private:
  SideInputs process_side(const TactileFrame& frame, bool allow_refresh);

  PipelineParams params_;
  FarnebackFlow flow_;
  std::array<std::optional<ReferenceFrame>, 2> refs_;
  std::array<std::optional<ExpandedFrame>, 2> prev_expanded_;
  std::array<int, 2> no_contact_run_{0, 0};
  std::optional<ProxySample> last_;
};

}  // namespace trex
