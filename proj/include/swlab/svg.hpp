#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace swlab {

// One polyline; points in data coordinates.
struct SvgSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

// Minimal line/scatter plot; the CSV stays the artifact of record, this is a
// derivative convenience view.
inline std::string svg_line_plot(const std::vector<SvgSeries>& series,
                                 const std::string& title, bool log_x = false,
                                 bool log_y = false) {
  const double width = 640.0;
  const double height = 420.0;
  const double margin = 50.0;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };

  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_x && s.x[i] <= 0.0) continue;
      if (log_y && s.y[i] <= 0.0) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  }
  if (!(xmin < xmax)) xmax = xmin + 1.0;
  if (!(ymin < ymax)) ymax = ymin + 1.0;

  auto px = [&](double v) {
    return margin + (tx(v) - xmin) / (xmax - xmin) * (width - 2 * margin);
  };
  auto py = [&](double v) {
    return height - margin -
           (ty(v) - ymin) / (ymax - ymin) * (height - 2 * margin);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">"
      << title << "</text>\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\""
      << width - 2 * margin << "\" height=\"" << height - 2 * margin
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_x && s.x[i] <= 0.0) continue;
      if (log_y && s.y[i] <= 0.0) continue;
      out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

inline const char* svg_palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                 "#bcbd22", "#17becf"};
  return colors[i % 10];
}

}  // namespace swlab
