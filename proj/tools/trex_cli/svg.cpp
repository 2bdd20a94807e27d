#include "trex_cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace trex::cli {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  const double a = std::abs(v);
  if (a != 0.0 && (a >= 1e5 || a < 1e-2)) {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%g", std::round(v * 1000.0) / 1000.0);
  }
  return buf;
}

// 1-2-5 tick spacing giving roughly `target` intervals.
double nice_step(double span, int target) {
  const double raw = span / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(double default_lo, double default_hi) {
    if (!std::isfinite(lo)) {
      lo = default_lo;
      hi = default_hi;
    }
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.1, 1.0);
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_panel_svg(const Panel& panel, int width, int height) {
  const double left = 64, right = 16, top = 28, bottom = 40;
  const double pw = width - left - right, ph = height - top - bottom;

  Range xr, yr;
  for (const auto& s : panel.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  if (panel.threshold) yr.add(*panel.threshold);
  xr.finish(0.0, 1.0);
  yr.finish(0.0, 1.0);
  const double ypad = 0.05 * (yr.hi - yr.lo);
  yr.lo -= ypad;
  yr.hi += ypad;

  auto sx = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double y) { return top + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
    << "<text x=\"" << num(left) << "\" y=\"18\" font-size=\"13\">" << xml_escape(panel.title) << "</text>\n";

  // Grid and tick labels.
  const double xs = nice_step(xr.hi - xr.lo, 8), ys = nice_step(yr.hi - yr.lo, 5);
  for (double t = std::ceil(xr.lo / xs) * xs; t <= xr.hi + 1e-9; t += xs) {
    o << "<line x1=\"" << num(sx(t)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(sx(t)) << "\" y2=\""
      << num(top + ph) << "\" stroke=\"#eee\"/>\n"
      << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(top + ph + 14) << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  for (double t = std::ceil(yr.lo / ys) * ys; t <= yr.hi + 1e-9; t += ys) {
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(sy(t)) << "\" x2=\"" << num(left + pw) << "\" y2=\""
      << num(sy(t)) << "\" stroke=\"#eee\"/>\n"
      << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t)
      << "</text>\n";
  }
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#444\"/>\n"
    << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 6.0) << "\" text-anchor=\"middle\">"
    << xml_escape(panel.x_label) << "</text>\n"
    << "<text transform=\"translate(14 " << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(panel.y_label) << "</text>\n";

  if (panel.threshold) {
    const double y = sy(*panel.threshold);
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + pw) << "\" y2=\"" << num(y)
      << "\" stroke=\"#c00\" stroke-dasharray=\"6 4\"/>\n"
      << "<text x=\"" << num(left + pw - 4) << "\" y=\"" << num(y - 4) << "\" text-anchor=\"end\" fill=\"#c00\">"
      << xml_escape(panel.threshold_label) << "</text>\n";
  }

  double legend_x = left + 8;
  for (const auto& s : panel.series) {
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        o << "<polyline fill=\"none\" stroke=\"" << xml_escape(s.color) << "\" stroke-width=\"1.2\" points=\"" << pts
          << "\"/>\n";
      }
      pts.clear();
    };
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += num(sx(s.x[i])) + ',' + num(sy(s.y[i]));
    }
    flush();
    if (!s.label.empty()) {
      o << "<line x1=\"" << num(legend_x) << "\" y1=\"" << num(top + 10) << "\" x2=\"" << num(legend_x + 14)
        << "\" y2=\"" << num(top + 10) << "\" stroke=\"" << xml_escape(s.color) << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << num(legend_x + 18) << "\" y=\"" << num(top + 14) << "\">" << xml_escape(s.label)
        << "</text>\n";
      legend_x += 30 + 7.0 * static_cast<double>(s.label.size());
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace trex::cli
