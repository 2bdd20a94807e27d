#include "trex/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trex {
namespace {

inline int reflect(int i, int n) noexcept {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

FloatImage to_float(const GrayImage& src) {
  FloatImage out(src.height(), src.width());
  auto in = src.pixels();
  auto o = out.pixels();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = static_cast<float>(in[i]);
  return out;
}

/// Bilinear upsample of a coarse flow plane to (height, width), scaling values.
FloatImage upsample_plane(const FloatImage& src, int height, int width, float value_scale) {
  FloatImage out(height, width);
  const float sy = static_cast<float>(src.height()) / static_cast<float>(height);
  const float sx = static_cast<float>(src.width()) / static_cast<float>(width);
  std::vector<int> x0s(width), x1s(width);
  std::vector<float> fxs(width);
  for (int x = 0; x < width; ++x) {
    float fx = std::clamp((static_cast<float>(x) + 0.5f) * sx - 0.5f, 0.0f,
                          static_cast<float>(src.width() - 1));
    int x0 = static_cast<int>(fx);
    x0s[x] = x0;
    x1s[x] = std::min(x0 + 1, src.width() - 1);
    fxs[x] = fx - static_cast<float>(x0);
  }
  for (int y = 0; y < height; ++y) {
    float fy = std::clamp((static_cast<float>(y) + 0.5f) * sy - 0.5f, 0.0f,
                          static_cast<float>(src.height() - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height() - 1);
    float wy = fy - static_cast<float>(y0);
    const float* r0 = src.row(y0);
    const float* r1 = src.row(y1);
    float* o = out.row(y);
    for (int x = 0; x < width; ++x) {
      float a = r0[x0s[x]] + (r0[x1s[x]] - r0[x0s[x]]) * fxs[x];
      float b = r1[x0s[x]] + (r1[x1s[x]] - r1[x0s[x]]) * fxs[x];
      o[x] = (a + (b - a) * wy) * value_scale;
    }
  }
  return out;
}

/// Separable box sum with replicated borders, normalized to a mean.
void box_blur(FloatImage& img, int radius, std::vector<float>& scratch) {
  const int h = img.height();
  const int w = img.width();
  const float norm = 1.0f / static_cast<float>((2 * radius + 1) * (2 * radius + 1));
  // horizontal running sum
  scratch.resize(static_cast<std::size_t>(w) + 2 * radius);
  for (int y = 0; y < h; ++y) {
    float* r = img.row(y);
    for (int i = 0; i < w + 2 * radius; ++i) scratch[i] = r[std::clamp(i - radius, 0, w - 1)];
    float acc = 0.0f;
    for (int i = 0; i < 2 * radius + 1; ++i) acc += scratch[i];
    for (int x = 0; x < w; ++x) {
      r[x] = acc;
      acc += scratch[x + 2 * radius + 1 < w + 2 * radius ? x + 2 * radius + 1 : w + 2 * radius - 1] -
             scratch[x];
    }
  }
  // vertical running sum, column-parallel over rows
  std::vector<float> acc(w, 0.0f);
  FloatImage src = img;
  for (int k = -radius; k <= radius; ++k) {
    const float* r = src.row(std::clamp(k, 0, h - 1));
    for (int x = 0; x < w; ++x) acc[x] += r[x];
  }
  for (int y = 0; y < h; ++y) {
    float* o = img.row(y);
    for (int x = 0; x < w; ++x) o[x] = acc[x] * norm;
    const float* add = src.row(std::min(y + radius + 1, h - 1));
    const float* sub = src.row(std::max(y - radius, 0));
    for (int x = 0; x < w; ++x) acc[x] += add[x] - sub[x];
  }
}

struct FlowPlanes {
  FloatImage dx, dy;
};

// Per-pixel normal-equation terms: G = A^T A, h = A^T db.
struct Moments {
  FloatImage gxx, gxy, gyy, hx, hy;
};

constexpr int kBorder = 5;
constexpr float kBorderWeight[kBorder] = {0.14f, 0.14f, 0.4472f, 0.4472f, 0.4472f};

void update_moments(const PolyExpansion& r0, const PolyExpansion& r1, const FlowPlanes& flow,
                    Moments& m) {
  const int h = r0.bx.height();
  const int w = r0.bx.width();
  for (int y = 0; y < h; ++y) {
    const float* fdx = flow.dx.row(y);
    const float* fdy = flow.dy.row(y);
    float* gxx = m.gxx.row(y);
    float* gxy = m.gxy.row(y);
    float* gyy = m.gyy.row(y);
    float* hx = m.hx.row(y);
    float* hy = m.hy.row(y);
    const float* bx0 = r0.bx.row(y);
    const float* by0 = r0.by.row(y);
    const float* axx0 = r0.axx.row(y);
    const float* ayy0 = r0.ayy.row(y);
    const float* axy0 = r0.axy.row(y);
    const float wy = y < kBorder ? kBorderWeight[y] : (y >= h - kBorder ? kBorderWeight[h - y - 1] : 1.0f);
    for (int x = 0; x < w; ++x) {
      const float dx = fdx[x];
      const float dy = fdy[x];
      const float fx = static_cast<float>(x) + dx;
      const float fy = static_cast<float>(y) + dy;
      const int x1 = static_cast<int>(std::floor(fx));
      const int y1 = static_cast<int>(std::floor(fy));
      float bx, by, axx, ayy, axy;
      if (x1 >= 0 && y1 >= 0 && x1 < w - 1 && y1 < h - 1) {
        const float tx = fx - static_cast<float>(x1);
        const float ty = fy - static_cast<float>(y1);
        const float a00 = (1.f - tx) * (1.f - ty), a01 = tx * (1.f - ty);
        const float a10 = (1.f - tx) * ty, a11 = tx * ty;
        auto sample = [&](const FloatImage& p) {
          const float* q0 = p.row(y1) + x1;
          const float* q1 = p.row(y1 + 1) + x1;
          return a00 * q0[0] + a01 * q0[1] + a10 * q1[0] + a11 * q1[1];
        };
        bx = sample(r1.bx);
        by = sample(r1.by);
        axx = (axx0[x] + sample(r1.axx)) * 0.5f;
        ayy = (ayy0[x] + sample(r1.ayy)) * 0.5f;
        axy = (axy0[x] + sample(r1.axy)) * 0.5f;
      } else {
        bx = by = 0.f;
        axx = axx0[x];
        ayy = ayy0[x];
        axy = axy0[x];
      }
      float dbx = (bx0[x] - bx) * 0.5f + axx * dx + axy * dy;
      float dby = (by0[x] - by) * 0.5f + axy * dx + ayy * dy;
      float s = wy * (x < kBorder ? kBorderWeight[x] : (x >= w - kBorder ? kBorderWeight[w - x - 1] : 1.0f));
      if (s != 1.0f) {
        dbx *= s;
        dby *= s;
        axx *= s;
        ayy *= s;
        axy *= s;
      }
      gxx[x] = axx * axx + axy * axy;
      gxy[x] = axy * (axx + ayy);
      gyy[x] = ayy * ayy + axy * axy;
      hx[x] = axx * dbx + axy * dby;
      hy[x] = axy * dbx + ayy * dby;
    }
  }
}

}  // namespace

namespace detail {

FloatImage pyr_down(const FloatImage& src) {
  const int h = src.height();
  const int w = src.width();
  const int oh = (h + 1) / 2;
  const int ow = (w + 1) / 2;
  FloatImage out(oh, ow);
  std::vector<float> tmp(static_cast<std::size_t>(w));
  for (int y = 0; y < oh; ++y) {
    const float* r[5];
    for (int k = 0; k < 5; ++k) r[k] = src.row(reflect(2 * y + k - 2, h));
    for (int x = 0; x < w; ++x) {
      tmp[x] = (r[0][x] + r[4][x]) * (1.f / 16) + (r[1][x] + r[3][x]) * (4.f / 16) + r[2][x] * (6.f / 16);
    }
    float* o = out.row(y);
    for (int x = 0; x < ow; ++x) {
      const int c = 2 * x;
      o[x] = (tmp[reflect(c - 2, w)] + tmp[reflect(c + 2, w)]) * (1.f / 16) +
             (tmp[reflect(c - 1, w)] + tmp[reflect(c + 1, w)]) * (4.f / 16) + tmp[c] * (6.f / 16);
    }
  }
  return out;
}

PolyExpansion poly_expand(const FloatImage& src, int n, const std::vector<float>& g,
                          const std::vector<float>& xg, const std::vector<float>& xxg, float ig11,
                          float ig03, float ig33, float ig55) {
  const int h = src.height();
  const int w = src.width();
  PolyExpansion out{FloatImage(h, w), FloatImage(h, w), FloatImage(h, w), FloatImage(h, w),
                    FloatImage(h, w)};
  // vertical moments, padded horizontally by n on each side
  const int pw = w + 2 * n;
  std::vector<float> v0(pw), v1(pw), v2(pw);
  std::vector<const float*> rows(2 * n + 1);
  for (int y = 0; y < h; ++y) {
    for (int k = -n; k <= n; ++k) rows[k + n] = src.row(std::clamp(y + k, 0, h - 1));
    for (int x = 0; x < w; ++x) {
      const float c = rows[n][x];
      float s0 = c * g[0], s1 = 0.f, s2 = c * xxg[0];
      for (int k = 1; k <= n; ++k) {
        const float up = rows[n + k][x];
        const float dn = rows[n - k][x];
        s0 += (up + dn) * g[k];
        s1 += (up - dn) * xg[k];
        s2 += (up + dn) * xxg[k];
      }
      v0[x + n] = s0;
      v1[x + n] = s1;
      v2[x + n] = s2;
    }
    for (int k = 0; k < n; ++k) {
      v0[k] = v0[n];
      v1[k] = v1[n];
      v2[k] = v2[n];
      v0[pw - 1 - k] = v0[pw - 1 - n];
      v1[pw - 1 - k] = v1[pw - 1 - n];
      v2[pw - 1 - k] = v2[pw - 1 - n];
    }
    float* obx = out.bx.row(y);
    float* oby = out.by.row(y);
    float* oxx = out.axx.row(y);
    float* oyy = out.ayy.row(y);
    float* oxy = out.axy.row(y);
    for (int x = 0; x < w; ++x) {
      const int c = x + n;
      float b1 = v0[c] * g[0];  // sum g g f
      float b2 = 0.f;           // sum g(y) xg(x) f
      float b3 = v1[c] * g[0];  // sum xg(y) g(x) f
      float b4 = v0[c] * xxg[0];
      float b5 = v2[c] * g[0];
      float b6 = 0.f;
      for (int k = 1; k <= n; ++k) {
        const float p0 = v0[c + k], m0 = v0[c - k];
        const float p1 = v1[c + k], m1 = v1[c - k];
        b1 += (p0 + m0) * g[k];
        b2 += (p0 - m0) * xg[k];
        b4 += (p0 + m0) * xxg[k];
        b3 += (p1 + m1) * g[k];
        b6 += (p1 - m1) * xg[k];
        b5 += (v2[c + k] + v2[c - k]) * g[k];
      }
      obx[x] = b2 * ig11;
      oby[x] = b3 * ig11;
      oxx[x] = b1 * ig03 + b4 * ig33;
      oyy[x] = b1 * ig03 + b5 * ig33;
      oxy[x] = b6 * ig55 * 0.5f;  // off-diagonal of A is half the xy coefficient
    }
  }
  return out;
}

}  // namespace detail

FarnebackFlow::FarnebackFlow(FarnebackParams params) : params_(params) {
  if (params_.levels < 1 || params_.iterations < 1 || params_.window < 1 || params_.poly_n < 1 ||
      params_.finest_level < 0) {
    throw std::invalid_argument("FarnebackParams: levels, iterations, window and poly_n must be positive");
  }
  const int n = params_.poly_n;
  const double sigma = params_.poly_sigma;
  std::vector<double> gd(n + 1);
  double s = 0.0;
  for (int x = -n; x <= n; ++x) s += std::exp(-x * x / (2 * sigma * sigma));
  for (int x = 0; x <= n; ++x) gd[x] = std::exp(-x * x / (2 * sigma * sigma)) / s;
  g_.resize(n + 1);
  xg_.resize(n + 1);
  xxg_.resize(n + 1);
  double m2 = 0.0, m4 = 0.0;
  for (int x = 0; x <= n; ++x) {
    g_[x] = static_cast<float>(gd[x]);
    xg_[x] = static_cast<float>(x * gd[x]);
    xxg_[x] = static_cast<float>(x * x * gd[x]);
    const double mult = x == 0 ? 1.0 : 2.0;
    m2 += mult * gd[x] * x * x;
    m4 += mult * gd[x] * x * x * x * x;
  }
  // Gram block over {1, x^2, y^2}: [[1,m2,m2],[m2,m4,m2^2],[m2,m2^2,m4]]
  const double a = m2, b = m4, c = m2 * m2;
  const double det = 1.0 * (b * b - c * c) - a * (a * b - c * a) + a * (a * c - b * a);
  const double inv03 = (a * c - a * b) / det;  // cofactor of (0,1) / det, symmetric
  const double inv33 = (b - a * a) / det;
  ig11_ = static_cast<float>(1.0 / m2);
  ig03_ = static_cast<float>(inv03);
  ig33_ = static_cast<float>(inv33);
  ig55_ = static_cast<float>(1.0 / (m2 * m2));
}

ExpandedFrame FarnebackFlow::expand(const GrayImage& frame) const {
  ExpandedFrame out;
  out.height = frame.height();
  out.width = frame.width();
  FloatImage level = to_float(frame);
  for (int k = 0; k < params_.finest_level; ++k) level = detail::pyr_down(level);
  for (int k = 0; k < params_.levels; ++k) {
    if (k > 0) level = detail::pyr_down(level);
    out.levels.push_back(detail::poly_expand(level, params_.poly_n, g_, xg_, xxg_, ig11_, ig03_,
                                             ig33_, ig55_));
    if (level.height() < 2 * params_.poly_n || level.width() < 2 * params_.poly_n) break;
  }
  return out;
}

FlowField FarnebackFlow::estimate(const ExpandedFrame& prev, const ExpandedFrame& curr) const {
  if (prev.height != curr.height || prev.width != curr.width || prev.levels.size() != curr.levels.size()) {
    throw StructuralError("estimate_flow: dimension mismatch");
  }
  FlowPlanes flow;
  std::vector<float> scratch;
  const int radius = params_.window / 2;
  for (int k = static_cast<int>(prev.levels.size()) - 1; k >= 0; --k) {
    const PolyExpansion& r0 = prev.levels[k];
    const PolyExpansion& r1 = curr.levels[k];
    const int h = r0.bx.height();
    const int w = r0.bx.width();
    if (flow.dx.empty()) {
      flow.dx = FloatImage(h, w);
      flow.dy = FloatImage(h, w);
    } else {
      flow.dx = upsample_plane(flow.dx, h, w, 2.0f);
      flow.dy = upsample_plane(flow.dy, h, w, 2.0f);
    }
    Moments m{FloatImage(h, w), FloatImage(h, w), FloatImage(h, w), FloatImage(h, w), FloatImage(h, w)};
    for (int it = 0; it < params_.iterations; ++it) {
      update_moments(r0, r1, flow, m);
      box_blur(m.gxx, radius, scratch);
      box_blur(m.gxy, radius, scratch);
      box_blur(m.gyy, radius, scratch);
      box_blur(m.hx, radius, scratch);
      box_blur(m.hy, radius, scratch);
      for (int y = 0; y < h; ++y) {
        const float* gxx = m.gxx.row(y);
        const float* gxy = m.gxy.row(y);
        const float* gyy = m.gyy.row(y);
        const float* hx = m.hx.row(y);
        const float* hy = m.hy.row(y);
        float* dx = flow.dx.row(y);
        float* dy = flow.dy.row(y);
        for (int x = 0; x < w; ++x) {
          const float idet = 1.0f / (gxx[x] * gyy[x] - gxy[x] * gxy[x] + 1e-3f);
          dx[x] = (gyy[x] * hx[x] - gxy[x] * hy[x]) * idet;
          dy[x] = (gxx[x] * hy[x] - gxy[x] * hx[x]) * idet;
        }
      }
    }
  }
  const float scale = static_cast<float>(1 << params_.finest_level);
  if (params_.finest_level == 0) return FlowField{std::move(flow.dx), std::move(flow.dy)};
  return FlowField{upsample_plane(flow.dx, prev.height, prev.width, scale),
                   upsample_plane(flow.dy, prev.height, prev.width, scale)};
}

FlowField FarnebackFlow::estimate(const GrayImage& prev, const GrayImage& curr) const {
  require_same_shape(prev, curr, "estimate_flow");
  return estimate(expand(prev), expand(curr));
}

FlowField estimate_flow(const GrayImage& prev, const GrayImage& curr, const FarnebackParams& params) {
  return FarnebackFlow(params).estimate(prev, curr);
}

}  // namespace trex
