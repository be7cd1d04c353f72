#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "grumo/gt01.hpp"
#include "grumo/metrics.hpp"

namespace grumo {

// CSV emission. Floats are printed with 6 significant digits; fields
// containing commas or quotes are quoted per RFC 4180 (method specs like
// "var:hflip,gray" need it).

inline std::string fmt_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

struct SparsificationRow {
  std::string method;
  std::string image_id;
  const SparsificationResult* result = nullptr;
};

inline std::string render_sparsification_csv(
    const std::vector<SparsificationRow>& rows) {
  std::string out = "fraction,oracle,actual,random,metric,method,image_id\n";
  for (const auto& row : rows) {
    const SparsificationResult& r = *row.result;
    for (std::size_t t = 0; t < r.fractions.size(); ++t) {
      out += fmt_g6(r.fractions[t]) + "," + fmt_g6(r.oracle[t]) + "," +
             fmt_g6(r.actual[t]) + "," + fmt_g6(r.random[t]) + "," +
             metric_name(r.kind) + "," + csv_field(row.method) + "," +
             csv_field(row.image_id) + "\n";
    }
  }
  return out;
}

/// Aggregated scalars for one method over a test set, plus the base depth
/// metrics of the predictions themselves and aggregation metadata.
struct MethodReport {
  std::string method;
  double ause[3] = {0, 0, 0};  // indexed like kAllMetrics
  double aurg[3] = {0, 0, 0};
  double nuce = 0.0;
  double base_metric[3] = {0, 0, 0};  // Abs Rel, RMSE, delta>=1.25 fraction
  std::size_t image_count = 0;
  std::size_t pixel_count = 0;
  double mask_coverage = 1.0;  // valid pixels / total pixels
};

inline std::string render_report_csv(const MethodReport& r) {
  std::string out = "method,metric,ause,aurg\n";
  for (int k = 0; k < 3; ++k)
    out += csv_field(r.method) + "," + metric_name(kAllMetrics[k]) + "," +
           fmt_g6(r.ause[k]) + "," + fmt_g6(r.aurg[k]) + "\n";
  out += csv_field(r.method) + ",nuce," + fmt_g6(r.nuce) + ",\n";
  return out;
}

inline std::string render_table_csv(const std::vector<MethodReport>& rows) {
  std::string out =
      "method,ause_abs_rel,aurg_abs_rel,ause_rmse,aurg_rmse,"
      "ause_delta_ge_125,aurg_delta_ge_125,nuce\n";
  for (const auto& r : rows) {
    out += csv_field(r.method);
    for (int k = 0; k < 3; ++k)
      out += "," + fmt_g6(r.ause[k]) + "," + fmt_g6(r.aurg[k]);
    out += "," + fmt_g6(r.nuce) + "\n";
  }
  return out;
}

}  // namespace grumo
