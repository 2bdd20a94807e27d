#include "trex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace trex {

DiffImage compute_diff(const GrayImage& frame, const GrayImage& ref) {
  require_same_shape(frame, ref, "compute_diff");
  DiffImage out{FloatImage(frame.height(), frame.width())};
  auto a = frame.pixels();
  auto b = ref.pixels();
  auto o = out.values.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    o[i] = static_cast<float>(std::abs(static_cast<int>(a[i]) - static_cast<int>(b[i])));
  }
  return out;
}

ContactMask compute_contact_mask(const DiffImage& diff, double tau, int n_min) {
  if (!(tau > 0.0)) throw std::invalid_argument("compute_contact_mask: tau must be > 0");
  if (n_min < 1) throw std::invalid_argument("compute_contact_mask: n_min must be >= 1");
  const int h = diff.values.height();
  const int w = diff.values.width();
  MaskImage bin(h, w);
  {
    auto d = diff.values.pixels();
    auto b = bin.pixels();
    for (std::size_t i = 0; i < d.size(); ++i) b[i] = d[i] > tau ? 1 : 0;
  }
  // erosion: horizontal then vertical min, outside counts as 0
  MaskImage tmp(h, w);
  for (int y = 0; y < h; ++y) {
    const auto* r = bin.row(y);
    auto* t = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      t[x] = (x > 0 && x < w - 1) ? static_cast<std::uint8_t>(r[x - 1] & r[x] & r[x + 1]) : 0;
    }
  }
  MaskImage eroded(h, w);
  for (int y = 1; y < h - 1; ++y) {
    const auto* a = tmp.row(y - 1);
    const auto* b = tmp.row(y);
    const auto* c = tmp.row(y + 1);
    auto* e = eroded.row(y);
    for (int x = 0; x < w; ++x) e[x] = static_cast<std::uint8_t>(a[x] & b[x] & c[x]);
  }
  // dilation: horizontal then vertical max, outside ignored
  for (int y = 0; y < h; ++y) {
    const auto* r = eroded.row(y);
    auto* t = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = r[x];
      if (x > 0) v |= r[x - 1];
      if (x < w - 1) v |= r[x + 1];
      t[x] = v;
    }
  }
  ContactMask out{MaskImage(h, w), 0, false};
  int count = 0;
  for (int y = 0; y < h; ++y) {
    const auto* b = tmp.row(y);
    const auto* a = y > 0 ? tmp.row(y - 1) : nullptr;
    const auto* c = y < h - 1 ? tmp.row(y + 1) : nullptr;
    auto* m = out.mask.row(y);
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = b[x];
      if (a) v |= a[x];
      if (c) v |= c[x];
      m[x] = v;
      count += v;
    }
  }
  out.support_count = count;
  out.valid = count >= n_min;
  return out;
}

WeightMap compute_weights(const DiffImage& diff, const ContactMask& mask, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("compute_weights: gamma must be > 0");
  require_same_shape(diff.values, mask.mask, "compute_weights");
  WeightMap out{DoubleImage(diff.values.height(), diff.values.width())};
  auto d = diff.values.pixels();
  auto m = mask.mask.pixels();
  auto o = out.weights.pixels();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (m[i]) o[i] = std::pow(static_cast<double>(d[i]), gamma);
  }
  return out;
}

double compute_fn(const WeightMap& weights) {
  const auto& w = weights.weights;
  if (w.empty()) return 0.0;
  double total = 0.0;
  for (int y = 0; y < w.height(); ++y) {
    const double* r = w.row(y);
    double row_sum = 0.0;
    for (int x = 0; x < w.width(); ++x) row_sum += r[x];
    total += row_sum;
  }
  return total / static_cast<double>(w.size());
}

std::optional<Point2> compute_cop(const WeightMap& weights) {
  const auto& w = weights.weights;
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < w.height(); ++y) {
    const double* r = w.row(y);
    double row_w = 0.0, row_x = 0.0;
    for (int x = 0; x < w.width(); ++x) {
      row_w += r[x];
      row_x += r[x] * x;
    }
    total += row_w;
    sx += row_x;
    sy += row_w * y;
  }
  if (!(total > 0.0)) return std::nullopt;
  return Point2{sx / total, sy / total};
}

std::optional<double> mean_vertical_cop(const std::optional<Point2>& cop_left,
                                        const std::optional<Point2>& cop_right, bool valid_left,
                                        bool valid_right) {
  if (!valid_left || !valid_right || !cop_left || !cop_right) return std::nullopt;
  return 0.5 * (cop_left->y + cop_right->y);
}

double median_inplace(std::span<float> values) {
  if (values.empty()) return 0.0;
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double compute_sy(const FlowField& flow, const ContactMask& mask) {
  if (!mask.valid) return 0.0;
  require_same_shape(flow.vy, mask.mask, "compute_sy");
  std::vector<float> support;
  support.reserve(static_cast<std::size_t>(mask.support_count));
  auto m = mask.mask.pixels();
  auto vy = flow.vy.pixels();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) support.push_back(std::abs(vy[i]));
  }
  return median_inplace(support);
}

ProxySample assemble_proxy_sample(const SideInputs& left, const SideInputs& right,
                                  const ProxySample* previous, double alpha,
                                  std::int64_t timestamp_us) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("assemble_proxy_sample: alpha must be in (0, 1]");
  ProxySample out;
  out.timestamp_us = timestamp_us;
  const SideInputs* in[2] = {&left, &right};
  for (std::size_t s = 0; s < 2; ++s) {
    SideProxy& p = out.sides[s];
    p.fn_raw = in[s]->fn_raw;
    p.sy_raw = in[s]->sy_raw;
    p.contact_valid = in[s]->contact_valid;
    p.support_count = in[s]->support_count;
    p.cop = in[s]->contact_valid ? in[s]->cop : std::nullopt;
    if (previous) {
      p.fn_ema = ema_update(previous->sides[s].fn_ema, p.fn_raw, alpha);
      p.sy_ema = ema_update(previous->sides[s].sy_ema, p.sy_raw, alpha);
    } else {
      p.fn_ema = p.fn_raw;
      p.sy_ema = p.sy_raw;
    }
  }
  out.sy_max_ema = std::max(out.sides[0].sy_ema, out.sides[1].sy_ema);
  out.fn_max_ema = std::max(out.sides[0].fn_ema, out.sides[1].fn_ema);
  out.mean_cop_y = mean_vertical_cop(out.sides[0].cop, out.sides[1].cop, out.sides[0].contact_valid,
                                     out.sides[1].contact_valid);
  return out;
}

}  // namespace trex
