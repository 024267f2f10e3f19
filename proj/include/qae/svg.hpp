#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "qae/errors.hpp"

namespace qae {

// One polyline on a chart.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal static SVG line chart: axes, ticks, legend, one polyline per
// series. Good enough for eyeballing training dynamics; no interactivity.
inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label,
                                     const std::vector<Series>& series) {
  constexpr double kWidth = 860.0, kHeight = 520.0;
  constexpr double kLeft = 70.0, kRight = 180.0, kTop = 50.0, kBottom = 60.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(kLeft) + "\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\">" +
         title + "</text>\n";

  // Axes and ticks.
  svg += "<g stroke=\"#333\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(kTop + plot_h) + "\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" +
         num(kLeft + plot_w) + "\" y2=\"" + num(kTop + plot_h) + "\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 5.0;
    const double fy = ymin + (ymax - ymin) * t / 5.0;
    svg += "<line x1=\"" + num(px(fx)) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" +
           num(px(fx)) + "\" y2=\"" + num(kTop + plot_h + 5) + "\"/>\n";
    svg += "<text stroke=\"none\" x=\"" + num(px(fx)) + "\" y=\"" + num(kTop + plot_h + 20) +
           "\" text-anchor=\"middle\">" + num(fx) + "</text>\n";
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py(fy)) + "\" x2=\"" + num(kLeft) +
           "\" y2=\"" + num(py(fy)) + "\"/>\n";
    svg += "<text stroke=\"none\" x=\"" + num(kLeft - 9) + "\" y=\"" + num(py(fy) + 4) +
           "\" text-anchor=\"end\">" + num(fy) + "</text>\n";
  }
  svg += "<text stroke=\"none\" x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" +
         num(kHeight - 14) + "\" text-anchor=\"middle\">" + x_label + "</text>\n";
  svg += "<text stroke=\"none\" x=\"18\" y=\"" + num(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " + num(kTop + plot_h / 2) +
         ")\">" + y_label + "</text>\n";
  svg += "</g>\n";

  // Series polylines and legend.
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof(kColors) / sizeof(kColors[0]))];
    std::string points;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      points += num(px(series[s].x[i])) + "," + num(py(series[s].y[i])) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.8\" points=\"" + points + "\"/>\n";
    const double ly = kTop + 16.0 + 20.0 * static_cast<double>(s);
    svg += "<line x1=\"" + num(kLeft + plot_w + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kLeft + plot_w + 34) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + plot_w + 40) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + series[s].label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream out(path);
  if (!out) throw SinkError("cannot open chart sink: " + path);
  out << svg;
}

}  // namespace qae
