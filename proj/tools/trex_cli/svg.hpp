#pragma once

#include <optional>
#include <string>
#include <vector>

namespace trex::cli {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;  // NaN breaks the line
};

struct Panel {
  std::string title;
  std::string x_label = "cycle";
  std::string y_label;
  std::vector<Series> series;
  std::optional<double> threshold;
  std::string threshold_label;
};

/// Standalone SVG document for one time-series panel. An empty panel still gets
/// axes and a frame.
std::string render_panel_svg(const Panel& panel, int width = 720, int height = 240);

/// Escapes &, <, >, " for text nodes and attributes.
std::string xml_escape(const std::string& text);

}  // namespace trex::cli
