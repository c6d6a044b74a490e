#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mdfa/io.hpp"
#include "mdfa/simulation.hpp"
#include "mdfa/types.hpp"

namespace mdfa::report {

inline const char* kCsvHeader = "setting,n,rep,estimator,se_lambda,se_total,iters,runtime_s,converged";

/// Study records as CSV text, one line per record, LF endings. Errors are
/// written as nan fields with converged 0.
inline std::string records_to_csv(const std::vector<simulation::RepRecord>& records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.setting);
    out += ',';
    out += std::to_string(r.n);
    out += ',';
    out += std::to_string(r.rep);
    out += ',';
    out += r.estimator;
    out += ',';
    out += io::fmt_g17(r.se_lambda);
    out += ',';
    out += io::fmt_g17(r.se_total);
    out += ',';
    out += std::to_string(r.iters);
    out += ',';
    out += io::fmt_fixed(r.runtime_s, 3);
    out += ',';
    out += r.converged ? '1' : '0';
    out += '\n';
  }
  return out;
}

/// Same records as JSON Lines (one object per line, keys sorted).
inline std::string records_to_jsonl(const std::vector<simulation::RepRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["setting"] = r.setting;
    j["n"] = r.n;
    j["rep"] = r.rep;
    j["estimator"] = r.estimator;
    if (std::isfinite(r.se_lambda)) j["se_lambda"] = r.se_lambda; else j["se_lambda"] = nullptr;
    if (std::isfinite(r.se_total)) j["se_total"] = r.se_total; else j["se_total"] = nullptr;
    j["iters"] = r.iters;
    j["runtime_s"] = r.runtime_s;
    j["converged"] = r.converged;
    out += j.dump();
    out += '\n';
  }
  return out;
}

/// Parse a results CSV produced by records_to_csv.
inline std::vector<simulation::RepRecord> records_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != kCsvHeader)
    throw ParseError(path + ": unexpected header '" + line + "'");
  std::vector<simulation::RepRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells = io::detail::split_csv_line(line);
    if (cells.size() != 9)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 9 fields");
    simulation::RepRecord r;
    try {
      r.setting = std::stoi(cells[0]);
      r.n = static_cast<Index>(std::stoll(cells[1]));
      r.rep = static_cast<Index>(std::stoll(cells[2]));
      r.estimator = cells[3];
      r.se_lambda = std::strtod(cells[4].c_str(), nullptr);
      r.se_total = std::strtod(cells[5].c_str(), nullptr);
      r.iters = static_cast<Index>(std::stoll(cells[6]));
      r.runtime_s = std::strtod(cells[7].c_str(), nullptr);
      r.converged = cells[8] == "1" || cells[8] == "true";
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad record");
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

inline std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (n, median value)
};

/// Medians per (setting, estimator) across the n grid for one value column.
template <class Get>
std::vector<Series> medians(const std::vector<simulation::RepRecord>& records, Get&& get) {
  std::map<std::tuple<int, std::string, Index>, std::vector<double>> cells;
  for (const auto& r : records) {
    const double v = get(r);
    if (std::isfinite(v)) cells[{r.setting, r.estimator, r.n}].push_back(v);
  }
  std::map<std::pair<int, std::string>, Series> grouped;
  for (auto& [key, vals] : cells) {
    const auto& [setting, est, n] = key;
    Series& s = grouped[{setting, est}];
    s.label = "S" + std::to_string(setting) + " " + est;
    s.points.emplace_back(static_cast<double>(n), median(vals));
  }
  std::vector<Series> out;
  for (auto& [key, s] : grouped) {
    std::sort(s.points.begin(), s.points.end());
    out.push_back(std::move(s));
  }
  return out;
}

inline void draw_panel(std::string& svg, const std::vector<Series>& series,
                       double x0, double y0, double w, double h,
                       const std::string& title,
                       const std::vector<std::string>& palette) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = 0.0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      if (y > 0.0) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  if (series.empty() || xmin >= xmax) {
    xmin = 1.0;
    xmax = 10.0;
  }
  if (ymax <= 0.0) {
    ymin = 0.01;
    ymax = 1.0;
  }
  ymin /= 1.15;
  ymax *= 1.15;
  const double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
  const double ly0 = std::log10(ymin), ly1 = std::log10(ymax);
  auto px = [&](double x) {
    return x0 + (std::log10(x) - lx0) / std::max(lx1 - lx0, 1e-12) * w;
  };
  auto py = [&](double y) {
    const double ly = std::log10(std::clamp(y, ymin, ymax));
    return y0 + h - (ly - ly0) / std::max(ly1 - ly0, 1e-12) * h;
  };

  svg += "<rect x=\"" + coord(x0) + "\" y=\"" + coord(y0) + "\" width=\"" + coord(w) +
         "\" height=\"" + coord(h) + "\" fill=\"none\" stroke=\"#888\"/>\n";
  svg += "<text x=\"" + coord(x0 + w / 2) + "\" y=\"" + coord(y0 - 8) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + title + "</text>\n";

  std::set<double> xticks;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) xticks.insert(x);
  for (double x : xticks) {
    svg += "<line x1=\"" + coord(px(x)) + "\" y1=\"" + coord(y0 + h) + "\" x2=\"" +
           coord(px(x)) + "\" y2=\"" + coord(y0 + h + 4) + "\" stroke=\"#888\"/>\n";
    svg += "<text x=\"" + coord(px(x)) + "\" y=\"" + coord(y0 + h + 16) +
           "\" text-anchor=\"middle\" font-size=\"10\">" +
           std::to_string(static_cast<long long>(x)) + "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    const double y = std::pow(10.0, ly0 + (ly1 - ly0) * t / 4.0);
    svg += "<line x1=\"" + coord(x0 - 4) + "\" y1=\"" + coord(py(y)) + "\" x2=\"" +
           coord(x0) + "\" y2=\"" + coord(py(y)) + "\" stroke=\"#888\"/>\n";
    char lab[32];
    std::snprintf(lab, sizeof(lab), "%.3g", y);
    svg += "<text x=\"" + coord(x0 - 6) + "\" y=\"" + coord(py(y) + 3) +
           "\" text-anchor=\"end\" font-size=\"10\">" + lab + "</text>\n";
  }

  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::string& color = palette[i % palette.size()];
    std::string pts;
    for (const auto& [x, y] : series[i].points) {
      if (!pts.empty()) pts += ' ';
      pts += coord(px(x)) + "," + coord(py(y));
    }
    svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    for (const auto& [x, y] : series[i].points)
      svg += "<circle cx=\"" + coord(px(x)) + "\" cy=\"" + coord(py(y)) +
             "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    const double ly = y0 + 14 + 13 * static_cast<double>(i);
    svg += "<line x1=\"" + coord(x0 + w - 98) + "\" y1=\"" + coord(ly - 4) + "\" x2=\"" +
           coord(x0 + w - 84) + "\" y2=\"" + coord(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + coord(x0 + w - 80) + "\" y=\"" + coord(ly) +
           "\" font-size=\"10\">" + series[i].label + "</text>\n";
  }
}

}  // namespace detail

/// Two-panel 800x600 SVG: median loading error and median total error versus
/// sample size (log axis), one line per (setting, estimator).
inline std::string render_svg(const std::vector<simulation::RepRecord>& records) {
  static const std::vector<std::string> palette = {
      "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
      "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
         "viewBox=\"0 0 800 600\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n";
  detail::draw_panel(svg, detail::medians(records, [](const simulation::RepRecord& r) { return r.se_lambda; }),
                     70, 40, 690, 210, "median loading error vs n", palette);
  detail::draw_panel(svg, detail::medians(records, [](const simulation::RepRecord& r) { return r.se_total; }),
                     70, 330, 690, 210, "median total error vs n", palette);
  svg += "</svg>\n";
  return svg;
}

}  // namespace mdfa::report
