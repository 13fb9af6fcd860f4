#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lgeq/core/error.hpp"

namespace lgeq::vio {

/// One report row. `slice` is empty for case-level rows. Undefined values
/// (e.g. Hausdorff on an empty mask) are nullopt and rendered blank.
struct ReportRow {
  std::string case_id;
  std::optional<int> slice;
  std::string method;
  std::optional<double> dice_pct;
  std::optional<double> hausdorff_mm;
  std::optional<double> scar_volume_cm3;
  std::optional<double> pct_infarct;
  std::optional<double> mvo_sensitivity;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct MetricsReport {
  std::vector<ReportRow> rows;
};

inline constexpr const char* kReportHeader =
    "case_id,slice,method,dice_pct,hausdorff_mm,scar_volume_cm3,pct_infarct,mvo_sensitivity";

inline std::string format_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

namespace detail {
inline std::string cell(const std::optional<double>& v) { return v ? format_fixed4(*v) : std::string{}; }

inline std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("report: bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("report: bad number '" + s + "'");
  }
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

inline std::string render_report(const MetricsReport& report) {
  std::ostringstream out;
  out << kReportHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.case_id << ',' << (r.slice ? std::to_string(*r.slice) : std::string{}) << ',' << r.method << ','
        << detail::cell(r.dice_pct) << ',' << detail::cell(r.hausdorff_mm) << ',' << detail::cell(r.scar_volume_cm3)
        << ',' << detail::cell(r.pct_infarct) << ',' << detail::cell(r.mvo_sensitivity) << '\n';
  }
  return out.str();
}

inline void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write report " + path.string());
  out << render_report(report);
  if (!out) throw IoError("report write failed: " + path.string());
}

inline MetricsReport parse_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("report: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kReportHeader) throw FormatError("report: unexpected header");
  MetricsReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 8) throw FormatError("report: expected 8 columns");
    ReportRow r;
    r.case_id = f[0];
    if (!f[1].empty()) r.slice = std::stoi(f[1]);
    r.method = f[2];
    r.dice_pct = detail::parse_cell(f[3]);
    r.hausdorff_mm = detail::parse_cell(f[4]);
    r.scar_volume_cm3 = detail::parse_cell(f[5]);
    r.pct_infarct = detail::parse_cell(f[6]);
    r.mvo_sensitivity = detail::parse_cell(f[7]);
    report.rows.push_back(std::move(r));
  }
  return report;
}

inline MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  return parse_report(in);
}

}  // namespace lgeq::vio
