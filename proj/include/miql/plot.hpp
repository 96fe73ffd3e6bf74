#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "miql/format.hpp"
#include "miql/harness.hpp"

namespace miql {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), x ascending
};

struct PlotOptions {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
  bool log_scale = false;
  int width = 820;
  int height = 500;
};

/// Floor applied to values on a log axis.
inline constexpr double kLogFloor = 1e-3;

namespace plot_detail {

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string num(double v) { return format_double(std::round(v * 100.0) / 100.0); }

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % (sizeof palette / sizeof palette[0])];
}

}  // namespace plot_detail

/// Self-contained SVG line chart, one polyline per series.
inline void emit_plot(const std::vector<Series>& series, std::ostream& os, const PlotOptions& opt) {
  using namespace plot_detail;
  if (series.empty()) throw std::invalid_argument("emit_plot: no series to draw");
  long clamped = 0;
  std::vector<Series> s = series;
  for (auto& sr : s) {
    std::vector<std::pair<double, double>> kept;
    for (auto [x, y] : sr.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (opt.log_scale && y < kLogFloor) {
        y = kLogFloor;
        ++clamped;
      }
      kept.emplace_back(x, opt.log_scale ? std::log10(y) : y);
    }
    sr.points = std::move(kept);
  }
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& sr : s) {
    for (auto [x, y] : sr.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) throw std::invalid_argument("emit_plot: series contain no finite points");
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }

  const double left = 80, right = 220, top = 40, bottom = 60;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(opt.title) << "</text>\n";
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    const double yv = y0 + (y1 - y0) * i / 5.0;
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    const std::string ytext = opt.log_scale ? "1e" + num(yv) : num(yv);
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << ytext << "</text>\n";
    os << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(py(yv)) << "\" y2=\"" << num(py(yv))
       << "\" stroke=\"#dddddd\"/>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(opt.height - 15.0) << "\" text-anchor=\"middle\">"
     << escape(opt.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(opt.y_label + (opt.log_scale ? " (log10)" : "")) << "</text>\n";

  for (std::size_t i = 0; i < s.size(); ++i) {
    os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s[i].points.size(); ++k)
      os << (k ? " " : "") << num(px(s[i].points[k].first)) << ',' << num(py(s[i].points[k].second));
    os << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << num(left + pw + 12) << "\" x2=\"" << num(left + pw + 36) << "\" y1=\"" << num(ly - 4) << "\" y2=\""
       << num(ly - 4) << "\" stroke=\"" << color(i) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(left + pw + 42) << "\" y=\"" << num(ly) << "\">" << escape(s[i].name) << "</text>\n";
  }
  if (clamped > 0) {
    os << "<text class=\"warning\" x=\"" << num(left + 6) << "\" y=\"" << num(top + 16) << "\" fill=\"#b00000\">warning: "
       << clamped << " values below " << format_double(kLogFloor) << " clamped to " << format_double(kLogFloor) << "</text>\n";
  }
  os << "</svg>\n";
}

enum class MetricColumn { Reward, RiverSteps, PathLength };

inline const char* to_string(MetricColumn m) {
  switch (m) {
    case MetricColumn::Reward: return "cumulative mean reward per episode";
    case MetricColumn::RiverSteps: return "cumulative mean river steps per episode";
    case MetricColumn::PathLength: return "cumulative mean path length per episode";
  }
  return "?";
}

/// Mean over trials per label and step; labels in first-seen order.
inline std::vector<Series> series_from_metrics(const std::vector<MetricRecord>& records, MetricColumn metric) {
  std::vector<std::string> order;
  std::map<std::string, std::map<long, std::pair<double, long>>> acc;
  for (const auto& r : records) {
    if (!acc.count(r.label)) order.push_back(r.label);
    const double v = metric == MetricColumn::Reward       ? r.row.cum_mean_reward
                     : metric == MetricColumn::RiverSteps ? r.row.cum_mean_river_steps
                                                          : r.row.cum_mean_path_length;
    auto& cell = acc[r.label][r.row.t];
    if (std::isfinite(v)) {
      cell.first += v;
      cell.second += 1;
    }
  }
  std::vector<Series> out;
  for (const auto& name : order) {
    Series s{name, {}};
    for (const auto& [t, sum] : acc[name])
      if (sum.second > 0) s.points.emplace_back(static_cast<double>(t), sum.first / static_cast<double>(sum.second));
    out.push_back(std::move(s));
  }
  return out;
}

/// Reads a curve.csv into one series per name (mean reward against x).
inline std::vector<Series> series_from_curve(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCurveHeader) throw std::runtime_error("curve csv: unexpected header");
  std::vector<Series> out;
  std::map<std::string, std::size_t> where;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = harness_detail::split_csv_line(line);
    if (f.size() != 6) throw std::runtime_error("curve csv: expected 6 fields");
    auto it = where.find(f[0]);
    if (it == where.end()) {
      it = where.emplace(f[0], out.size()).first;
      out.push_back({f[0], {}});
    }
    out[it->second].points.emplace_back(parse_double(f[1]), parse_double(f[2]));
  }
  return out;
}

}  // namespace miql
