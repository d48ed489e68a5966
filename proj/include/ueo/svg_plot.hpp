// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace ueo {

struct PlotSeries {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::vector<std::string> x_tick_labels;  // optional; replaces numeric ticks at x = 0, 1, ...
};

/// Static SVG line chart with a legend.
std::string render_svg(const LinePlot& plot);

}  // namespace ueo
