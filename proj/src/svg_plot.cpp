// SPDX-License-Identifier: Apache-2.0
#include "ueo/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ueo {
namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 180, kTop = 40, kBottom = 60;
const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::string render_svg(const LinePlot& plot) {
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : plot.series) {
    for (double x : s.xs) x_min = std::min(x_min, x), x_max = std::max(x_max, x);
    for (double y : s.ys)
      if (std::isfinite(y)) y_min = std::min(y_min, y), y_max = std::max(y_max, y);
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1;
  if (!std::isfinite(y_min)) y_min = 0, y_max = 1;
  if (x_max == x_min) x_min -= 0.5, x_max += 0.5;
  if (y_max == y_min) y_min -= 0.05, y_max += 0.05;
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", kWidth) +
                    "\" height=\"" + fmt("%.0f", kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", kLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(plot.title) + "</text>\n";
  svg += "<rect x=\"" + fmt("%.1f", kLeft) + "\" y=\"" + fmt("%.1f", kTop) + "\" width=\"" + fmt("%.1f", pw) +
         "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double y = y_min + (y_max - y_min) * i / 5.0;
    svg += "<text x=\"" + fmt("%.1f", kLeft - 6) + "\" y=\"" + fmt("%.1f", sy(y) + 4) +
           "\" text-anchor=\"end\">" + fmt("%.3f", y) + "</text>\n";
  }
  if (!plot.x_tick_labels.empty()) {
    for (std::size_t i = 0; i < plot.x_tick_labels.size(); ++i)
      svg += "<text x=\"" + fmt("%.1f", sx(static_cast<double>(i))) + "\" y=\"" +
             fmt("%.1f", kTop + ph + 16) + "\" text-anchor=\"middle\">" + escape(plot.x_tick_labels[i]) +
             "</text>\n";
  } else {
    for (int i = 0; i <= 5; ++i) {
      const double x = x_min + (x_max - x_min) * i / 5.0;
      svg += "<text x=\"" + fmt("%.1f", sx(x)) + "\" y=\"" + fmt("%.1f", kTop + ph + 16) +
             "\" text-anchor=\"middle\">" + fmt("%g", x) + "</text>\n";
    }
  }
  svg += "<text x=\"" + fmt("%.1f", kLeft + pw / 2) + "\" y=\"" + fmt("%.1f", kHeight - 18) +
         "\" text-anchor=\"middle\">" + escape(plot.x_label) + "</text>\n";
  svg += "<text transform=\"translate(18," + fmt("%.1f", kTop + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(plot.y_label) + "</text>\n";

  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const auto& series = plot.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < series.xs.size() && i < series.ys.size(); ++i) {
      if (!std::isfinite(series.ys[i])) continue;
      points += fmt("%.2f", sx(series.xs[i])) + "," + fmt("%.2f", sy(series.ys[i])) + " ";
      svg += "<circle cx=\"" + fmt("%.2f", sx(series.xs[i])) + "\" cy=\"" + fmt("%.2f", sy(series.ys[i])) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
           points + "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(s);
    svg += "<line x1=\"" + fmt("%.1f", kLeft + pw + 12) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" +
           fmt("%.1f", kLeft + pw + 32) + "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", kLeft + pw + 38) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" +
           escape(series.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ueo
