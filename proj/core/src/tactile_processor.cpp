#include "trex/tactile_processor.hpp"

#include <stdexcept>

namespace trex {

TactileProcessor::TactileProcessor(PipelineParams params) : params_(params), flow_(params.flow) {}

void TactileProcessor::set_reference(Side side, ReferenceFrame ref) {
  refs_[index_of(side)] = std::move(ref);
  no_contact_run_[index_of(side)] = 0;
}

void TactileProcessor::reset() {
  for (auto& r : refs_) r.reset();
  for (auto& p : prev_expanded_) p.reset();
  no_contact_run_ = {0, 0};
  last_.reset();
}

SideInputs TactileProcessor::process_side(const TactileFrame& frame, bool allow_refresh) {
  const std::size_t s = index_of(frame.side);
  if (!refs_[s]) refs_[s] = ReferenceFrame{frame.pixels, frame.timestamp_us};

  const DiffImage diff = compute_diff(frame.pixels, refs_[s]->pixels);
  const ContactMask mask = compute_contact_mask(diff, params_.tau, params_.n_min);
  const WeightMap weights = compute_weights(diff, mask, params_.gamma);

  SideInputs in;
  in.fn_raw = compute_fn(weights);
  in.contact_valid = mask.valid;
  in.support_count = mask.support_count;
  if (mask.valid) in.cop = compute_cop(weights);

  ExpandedFrame expanded = flow_.expand(frame.pixels);
  if (prev_expanded_[s] && mask.valid) {
    in.sy_raw = compute_sy(flow_.estimate(*prev_expanded_[s], expanded), mask);
  }
  prev_expanded_[s] = std::move(expanded);

  if (mask.valid) {
    no_contact_run_[s] = 0;
  } else if (++no_contact_run_[s] >= params_.reference_refresh_frames && allow_refresh) {
    refs_[s] = ReferenceFrame{frame.pixels, frame.timestamp_us};
    no_contact_run_[s] = 0;
  }
  return in;
}

ProxySample TactileProcessor::process(const TactileFrame& left, const TactileFrame& right,
                                      bool allow_reference_refresh) {
  if (left.side != Side::Left || right.side != Side::Right) {
    throw std::invalid_argument("TactileProcessor::process: frames must be (Left, Right)");
  }
  const SideInputs l = process_side(left, allow_reference_refresh);
  const SideInputs r = process_side(right, allow_reference_refresh);
  ProxySample sample = assemble_proxy_sample(l, r, last_ ? &*last_ : nullptr, params_.alpha,
                                             left.timestamp_us);
  last_ = sample;
  return sample;
}

}  // namespace trex
