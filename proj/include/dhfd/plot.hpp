#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dhfd/time.hpp"

namespace dhfd {

struct PlotSeries {
  std::string label;
  std::vector<Timestamp> x;
  std::vector<double> y;  // missing values break the line
};

struct LineChart {
  std::string title;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::optional<double> hline;        // e.g. C_thr
  std::optional<Timestamp> vline;     // e.g. report time
};

// Static SVG line chart.
std::string render_svg(const LineChart& chart, int width = 900, int height = 320);

}  // namespace dhfd
