#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcorrupt/acrt.hpp"
#include "pcorrupt/corruption.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/indicator.hpp"
#include "pcorrupt/scan.hpp"

namespace pcorrupt {

enum class ReportFormat { csv, json, svg };

inline ReportFormat report_format_from_string(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "svg" || s == "svg-heatmap") return ReportFormat::svg;
  throw ValidationError("unknown report format '" + std::string(s) + "' (expected csv|json|svg)");
}

inline std::string fmt_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline const char* kScanCsvHeader = "group,epsilon,metric_before,metric_after,delta_loss,first_order,degenerate";

inline std::string scan_to_csv(const ScanReport& r) {
  std::string out = kScanCsvHeader;
  out += '\n';
  for (const auto& c : r.cells) {
    out += c.group_label + ',' + fmt_real(c.epsilon) + ',' + fmt_real(c.metric_before) + ',' +
           fmt_real(c.metric_after) + ',' + fmt_real(c.delta_loss) + ',' + fmt_real(c.first_order) + ',' +
           (c.degenerate ? "1" : "0") + '\n';
  }
  return out;
}

inline nlohmann::json scan_to_json(const ScanReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"group_label", c.group_label},
                     {"epsilon", c.epsilon},
                     {"metric_before", c.metric_before},
                     {"metric_after", c.metric_after},
                     {"delta_loss", c.delta_loss},
                     {"first_order", c.first_order},
                     {"degenerate", c.degenerate}});
  }
  return {{"axis", to_string(r.axis)},
          {"constraint_template", {{"p", norm_string(r.p)}, {"n", r.n}}},
          {"metric", r.metric_name},
          {"cells", cells}};
}

// Inverse of scan_to_csv for the serialized columns.
inline std::vector<ScanCell> parse_scan_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kScanCsvHeader) throw FormatError("scan CSV header mismatch");
  std::vector<ScanCell> cells;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 7) throw FormatError("scan CSV row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
    ScanCell c;
    try {
      c.group_label = f[0];
      c.epsilon = std::stod(f[1]);
      c.metric_before = std::stod(f[2]);
      c.metric_after = std::stod(f[3]);
      c.delta_loss = std::stod(f[4]);
      c.first_order = std::stod(f[5]);
      c.degenerate = f[6] == "1";
    } catch (const std::exception&) {
      throw FormatError("scan CSV row " + std::to_string(row) + " has a non-numeric field");
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

// Colour ramp for the heatmap: t in [0, 1] maps linearly from
// rgb(255,255,204) (low delta_loss) to rgb(189,0,38) (high delta_loss).
inline std::array<int, 3> heat_color(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  constexpr std::array<int, 3> lo{255, 255, 204}, hi{189, 0, 38};
  std::array<int, 3> rgb{};
  for (int i = 0; i < 3; ++i) rgb[i] = static_cast<int>(std::lround(lo[i] + t * (hi[i] - lo[i])));
  return rgb;
}

struct HeatmapBounds {
  std::optional<double> lo, hi;  // unset: min / max over the report
};

// Rows are groups in first-appearance order, columns are epsilons ascending.
inline std::string scan_to_svg(const ScanReport& r, const HeatmapBounds& bounds = {}) {
  std::vector<std::string> groups;
  std::vector<double> eps;
  for (const auto& c : r.cells) {
    if (std::find(groups.begin(), groups.end(), c.group_label) == groups.end()) groups.push_back(c.group_label);
    if (std::find(eps.begin(), eps.end(), c.epsilon) == eps.end()) eps.push_back(c.epsilon);
  }
  std::sort(eps.begin(), eps.end());
  double lo = bounds.lo.value_or(0.0), hi = bounds.hi.value_or(0.0);
  if (!r.cells.empty()) {
    if (!bounds.lo) {
      lo = r.cells.front().delta_loss;
      for (const auto& c : r.cells) lo = std::min(lo, c.delta_loss);
    }
    if (!bounds.hi) {
      hi = r.cells.front().delta_loss;
      for (const auto& c : r.cells) hi = std::max(hi, c.delta_loss);
    }
  }
  constexpr int cw = 80, ch = 28, left = 170, top = 40;
  const int width = left + cw * static_cast<int>(eps.size()) + 20;
  const int height = top + ch * static_cast<int>(groups.size()) + 20;
  std::string s;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"11\">\n",
                width, height);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"14\">delta_loss by %s; ramp [%s, %s]</text>\n",
                std::string(to_string(r.axis)).c_str(), fmt_real(lo).c_str(), fmt_real(hi).c_str());
  s += buf;
  for (std::size_t j = 0; j < eps.size(); ++j) {
    std::snprintf(buf, sizeof buf, "<text class=\"col\" x=\"%d\" y=\"%d\">eps=%s</text>\n",
                  left + cw * static_cast<int>(j) + 4, top - 6, fmt_real(eps[j]).c_str());
    s += buf;
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::snprintf(buf, sizeof buf, "<text class=\"row\" x=\"4\" y=\"%d\">%s</text>\n",
                  top + ch * static_cast<int>(i) + 18, groups[i].c_str());
    s += buf;
  }
  for (const auto& c : r.cells) {
    const auto gi = std::find(groups.begin(), groups.end(), c.group_label) - groups.begin();
    const auto ej = std::find(eps.begin(), eps.end(), c.epsilon) - eps.begin();
    const double t = hi > lo ? (c.delta_loss - lo) / (hi - lo) : 0.0;
    const auto rgb = heat_color(t);
    std::snprintf(buf, sizeof buf,
                  "<rect class=\"cell\" x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\">"
                  "<title>%s eps=%s delta_loss=%s</title></rect>\n",
                  left + cw * static_cast<int>(ej), top + ch * static_cast<int>(gi), cw, ch, rgb[0], rgb[1], rgb[2],
                  c.group_label.c_str(), fmt_real(c.epsilon).c_str(), fmt_real(c.delta_loss).c_str());
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

inline std::string mc_to_csv(const McSummary& m) {
  std::string out = "trials,mean_delta,std_delta,alpha_0.9,alpha_0.95,alpha_0.995,max_abs\n";
  out += std::to_string(m.trials) + ',' + fmt_real(m.mean_delta) + ',' + fmt_real(m.std_delta);
  for (double level : mc_quantile_levels()) out += ',' + fmt_real(m.quantile_abs.at(level));
  out += ',' + fmt_real(m.max_abs) + '\n';
  return out;
}

inline nlohmann::json mc_to_json(const McSummary& m) {
  nlohmann::json q = nlohmann::json::object();
  for (const auto& [level, v] : m.quantile_abs) q[fmt_real(level)] = v;
  return {{"trials", m.trials}, {"mean_delta", m.mean_delta}, {"std_delta", m.std_delta},
          {"quantile_abs", q},  {"max_abs", m.max_abs},       {"deltas", m.deltas}};
}

inline std::string robustness_to_csv(const std::vector<RobustnessRow>& rows) {
  std::string out = "epsilon,metric_baseline,metric_acrt\n";
  for (const auto& r : rows) out += fmt_real(r.epsilon) + ',' + fmt_real(r.metric_baseline) + ',' + fmt_real(r.metric_acrt) + '\n';
  return out;
}

inline nlohmann::json robustness_to_json(const std::vector<RobustnessRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"epsilon", r.epsilon}, {"metric_baseline", r.metric_baseline}, {"metric_acrt", r.metric_acrt}});
  return arr;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string render(const ScanReport& r, ReportFormat f, const HeatmapBounds& b = {}) {
  switch (f) {
    case ReportFormat::csv: return scan_to_csv(r);
    case ReportFormat::json: return scan_to_json(r).dump(2) + '\n';
    case ReportFormat::svg: return scan_to_svg(r, b);
  }
  return {};
}

inline std::string render(const McSummary& m, ReportFormat f) {
  if (f == ReportFormat::svg) throw ValidationError("svg heatmap is only defined for scan reports");
  return f == ReportFormat::csv ? mc_to_csv(m) : mc_to_json(m).dump(2) + '\n';
}

inline std::string render(const std::vector<RobustnessRow>& rows, ReportFormat f) {
  if (f == ReportFormat::svg) throw ValidationError("svg heatmap is only defined for scan reports");
  return f == ReportFormat::csv ? robustness_to_csv(rows) : robustness_to_json(rows).dump(2) + '\n';
}

template <class Report>
void emit_report(const Report& r, ReportFormat f, const std::string& path) {
  write_text(path, render(r, f));
}

inline void emit_report(const ScanReport& r, ReportFormat f, const std::string& path, const HeatmapBounds& b) {
  write_text(path, render(r, f, b));
}

}  // namespace pcorrupt
