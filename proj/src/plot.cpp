#include "dhfd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dhfd {
namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const LineChart& chart, int width, int height) {
  const double left = 60, right = 20, top = 30, bottom = 40;
  const double pw = width - left - right, ph = height - top - bottom;

  long long xmin = std::numeric_limits<long long>::max(), xmax = std::numeric_limits<long long>::min();
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const auto t = static_cast<long long>(s.x[i].time_since_epoch().count());
      xmin = std::min(xmin, t);
      xmax = std::max(xmax, t);
      if (std::isfinite(s.y[i])) {
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (chart.hline) {
    ymin = std::min(ymin, *chart.hline);
    ymax = std::max(ymax, *chart.hline);
  }
  if (xmin > xmax) xmin = xmax = 0;
  if (!(ymin <= ymax)) ymin = ymax = 0.0;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  auto px = [&](long long t) { return left + pw * static_cast<double>(t - xmin) / static_cast<double>(xmax - xmin); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - ymin) / (ymax - ymin)); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(left) + "\" y=\"18\" font-size=\"13\">" + escape(chart.title) + "</text>\n";
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" +
         num(ph) + "\" fill=\"none\" stroke=\"#888\"/>\n";
  svg += "<text x=\"4\" y=\"" + num(top + 10) + "\">" + num(ymax) + "</text>\n";
  svg += "<text x=\"4\" y=\"" + num(top + ph) + "\">" + num(ymin) + "</text>\n";
  svg += "<text x=\"4\" y=\"" + num(top + ph / 2) + "\">" + escape(chart.y_label) + "</text>\n";
  svg += "<text x=\"" + num(left) + "\" y=\"" + num(height - 12.0) + "\">" +
         format_timestamp(Timestamp{Duration{xmin}}) + "</text>\n";
  svg += "<text x=\"" + num(left + pw) + "\" y=\"" + num(height - 12.0) + "\" text-anchor=\"end\">" +
         format_timestamp(Timestamp{Duration{xmax}}) + "</text>\n";

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string path;
    bool pen_down = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        pen_down = false;
        continue;
      }
      path += pen_down ? " L" : " M";
      path += num(px(s.x[i].time_since_epoch().count())) + "," + num(py(s.y[i]));
      pen_down = true;
    }
    if (!path.empty())
      svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.2\"/>\n";
    svg += "<text x=\"" + num(left + pw - 150) + "\" y=\"" + num(top + 14.0 * (k + 1)) +
           "\" fill=\"" + color + "\">" + escape(s.label) + "</text>\n";
  }
  if (chart.hline)
    svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(py(*chart.hline)) +
           "\" y2=\"" + num(py(*chart.hline)) + "\" stroke=\"#555\" stroke-dasharray=\"4 3\"/>\n";
  if (chart.vline) {
    const double x = px(chart.vline->time_since_epoch().count());
    svg += "<line x1=\"" + num(x) + "\" x2=\"" + num(x) + "\" y1=\"" + num(top) + "\" y2=\"" +
           num(top + ph) + "\" stroke=\"red\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace dhfd
