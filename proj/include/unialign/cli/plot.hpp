#pragma once

// Self-contained static SVG line chart.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "unialign/error.hpp"

namespace unialign::cli {

struct LineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_line_chart(const std::vector<LineSeries>& series, const std::string& title,
                                     const std::string& x_label, const std::string& y_label) {
  require(!series.empty(), ErrorCode::InvalidArgument, "nothing to plot");
  constexpr double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    require(s.x.size() == s.y.size() && !s.x.empty(), ErrorCode::InvalidArgument, "series needs matching x and y");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         detail::escape_xml(title) + "</text>\n";
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + detail::fixed(left) + "\" y1=\"" + detail::fixed(top + ph) + "\" x2=\"" +
         detail::fixed(left + pw) + "\" y2=\"" + detail::fixed(top + ph) + "\"/>\n";
  svg += "<line x1=\"" + detail::fixed(left) + "\" y1=\"" + detail::fixed(top) + "\" x2=\"" + detail::fixed(left) +
         "\" y2=\"" + detail::fixed(top + ph) + "\"/>\n";
  svg += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0;
    const double yv = y0 + (y1 - y0) * k / 5.0;
    svg += "<text x=\"" + detail::fixed(px(xv)) + "\" y=\"" + detail::fixed(top + ph + 16) +
           "\" text-anchor=\"middle\">" + detail::tick_label(xv) + "</text>\n";
    svg += "<text x=\"" + detail::fixed(left - 6) + "\" y=\"" + detail::fixed(py(yv) + 4) +
           "\" text-anchor=\"end\">" + detail::tick_label(yv) + "</text>\n";
    svg += "<line x1=\"" + detail::fixed(left) + "\" y1=\"" + detail::fixed(py(yv)) + "\" x2=\"" +
           detail::fixed(left + pw) + "\" y2=\"" + detail::fixed(py(yv)) + "\" stroke=\"#dddddd\"/>\n";
  }
  svg += "<text x=\"" + detail::fixed(left + pw / 2) + "\" y=\"" + detail::fixed(height - 10) +
         "\" text-anchor=\"middle\">" + detail::escape_xml(x_label) + "</text>\n";
  svg += "<text transform=\"translate(16," + detail::fixed(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::escape_xml(y_label) + "</text>\n";
  svg += "</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof kColors / sizeof *kColors)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < series[s].x.size(); ++k) {
      if (k) svg += ' ';
      svg += detail::fixed(px(series[s].x[k])) + "," + detail::fixed(py(series[s].y[k]));
    }
    svg += "\"/>\n";
    if (!series[s].label.empty())
      svg += "<text x=\"" + detail::fixed(left + pw - 4) + "\" y=\"" + detail::fixed(top + 14 + 14.0 * s) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" +
             detail::escape_xml(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace unialign::cli
