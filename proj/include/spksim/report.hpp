// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_REPORT_HPP
#define SPKSIM_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spksim/dataset.hpp"
#include "spksim/score_stats.hpp"

namespace spksim {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Marker styles of the prediction scatter.
inline constexpr std::string_view kWithinColor = "#1f77b4";
inline constexpr std::string_view kOutsideColor = "#d62728";

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::string dataset_fingerprint;
  std::string tool_version{kToolVersion};
  double wall_time_s = 0.0;
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["dataset_fingerprint"] = m.dataset_fingerprint;
  j["tool_version"] = m.tool_version;
  j["wall_time_s"] = m.wall_time_s;
  return j;
}

namespace svg {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
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

struct Frame {
  double width = 480;
  double height = 400;
  double left = 56;
  double right = 16;
  double top = 32;
  double bottom = 48;
  double x_lo = 0, x_hi = 100, y_lo = 0, y_hi = 100;

  double px(double x) const { return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom); }
};

inline std::string header(const Frame& f, std::string_view title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) +
       "\" viewBox=\"0 0 " + num(f.width) + " " + num(f.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + num(f.width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + escape(title) +
       "</text>\n";
  return s;
}

/// Axis frame as a single path, with ticks and labels. No rect or circle
/// elements are used here, so those stay reserved for data.
inline std::string axes(const Frame& f, std::string_view x_label, std::string_view y_label, double x_step,
                        double y_step) {
  std::string s = "<path d=\"M" + num(f.px(f.x_lo)) + " " + num(f.py(f.y_hi)) + " V" + num(f.py(f.y_lo)) + " H" +
                  num(f.px(f.x_hi)) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double x = f.x_lo; x <= f.x_hi + 1e-9; x += x_step) {
    s += "<text x=\"" + num(f.px(x)) + "\" y=\"" + num(f.py(f.y_lo) + 14) + "\" text-anchor=\"middle\">" +
         num(x).substr(0, num(x).size() - 3) + "</text>\n";
  }
  for (double y = f.y_lo; y <= f.y_hi + 1e-9; y += y_step) {
    s += "<text x=\"" + num(f.left - 6) + "\" y=\"" + num(f.py(y) + 4) + "\" text-anchor=\"end\">" +
         num(y).substr(0, num(y).size() - 3) + "</text>\n";
  }
  s += "<text x=\"" + num((f.left + f.width - f.right) / 2) + "\" y=\"" + num(f.height - 10) +
       "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  s += "<text transform=\"translate(14 " + num((f.top + f.height - f.bottom) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  return s;
}

}  // namespace svg

struct ScatterPoint {
  std::string id;
  double prediction = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Predictions against mean scores. Points within one sd of the mean are
/// blue circles; points further away are red squares. Exactly one circle or
/// rect element is emitted per point.
inline std::string scatter_svg(std::span<const ScatterPoint> points, std::string_view title) {
  svg::Frame f;
  std::string s = svg::header(f, title);
  s += svg::axes(f, "mean listener score", "prediction", 20, 20);
  s += "<line x1=\"" + svg::num(f.px(0)) + "\" y1=\"" + svg::num(f.py(0)) + "\" x2=\"" + svg::num(f.px(100)) +
       "\" y2=\"" + svg::num(f.py(100)) + "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  s += "<g id=\"points\">\n";
  for (const auto& p : points) {
    const double x = f.px(std::clamp(p.mean, kMinScore, kMaxScore));
    const double y = f.py(std::clamp(p.prediction, kMinScore, kMaxScore));
    const std::string id = svg::escape(p.id);
    if (std::abs(p.prediction - p.mean) <= p.sd) {
      s += "<circle data-id=\"" + id + "\" cx=\"" + svg::num(x) + "\" cy=\"" + svg::num(y) + "\" r=\"2.5\" fill=\"" +
           std::string(kWithinColor) + "\" fill-opacity=\"0.7\"/>\n";
    } else {
      s += "<rect data-id=\"" + id + "\" x=\"" + svg::num(x - 2.5) + "\" y=\"" + svg::num(y - 2.5) +
           "\" width=\"5\" height=\"5\" fill=\"" + std::string(kOutsideColor) + "\" fill-opacity=\"0.7\"/>\n";
    }
  }
  s += "</g>\n";
  s += "<text x=\"" + svg::num(f.left + 8) + "\" y=\"" + svg::num(f.top + 10) + "\" fill=\"" +
       std::string(kWithinColor) + "\">circle: within 1 sd</text>\n";
  s += "<text x=\"" + svg::num(f.left + 8) + "\" y=\"" + svg::num(f.top + 24) + "\" fill=\"" +
       std::string(kOutsideColor) + "\">square: outside 1 sd</text>\n";
  s += "</svg>\n";
  return s;
}

/// Bar chart of a histogram; one rect per bin. Under- and overflow counts
/// are printed below the title.
inline std::string histogram_svg(const Histogram& h, std::string_view title, std::string_view x_label) {
  svg::Frame f;
  f.x_lo = h.edges.front();
  f.x_hi = h.edges.back();
  const std::size_t peak = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
  f.y_lo = 0;
  f.y_hi = static_cast<double>(std::max<std::size_t>(peak, 1));
  std::string s = svg::header(f, title);
  const double span = f.x_hi - f.x_lo;
  s += svg::axes(f, x_label, "count", span / 4, f.y_hi / 4);
  s += "<g id=\"bars\">\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double x0 = f.px(h.edges[b]);
    const double x1 = f.px(h.edges[b + 1]);
    const double y = f.py(static_cast<double>(h.counts[b]));
    s += "<rect x=\"" + svg::num(x0) + "\" y=\"" + svg::num(y) + "\" width=\"" + svg::num(x1 - x0) + "\" height=\"" +
         svg::num(f.py(0) - y) + "\" fill=\"#7f7f7f\" stroke=\"#fff\" stroke-width=\"0.5\"/>\n";
  }
  s += "</g>\n";
  s += "<text x=\"" + svg::num(f.width / 2) + "\" y=\"" + svg::num(f.top - 2) + "\" text-anchor=\"middle\">" +
       "n=" + std::to_string(h.total()) + " underflow=" + std::to_string(h.underflow) +
       " overflow=" + std::to_string(h.overflow) + "</text>\n";
  s += "</svg>\n";
  return s;
}

/// Mean minus each individual listener score, over all examples.
inline std::vector<double> score_discrepancies(const EvaluationDataset& ds) {
  std::vector<double> out;
  for (const auto& ex : ds.examples()) {
    const auto d = distribution_of(ex);
    for (double s : d.raw) out.push_back(d.mean - s);
  }
  return out;
}

}  // namespace spksim

#endif  // SPKSIM_REPORT_HPP
