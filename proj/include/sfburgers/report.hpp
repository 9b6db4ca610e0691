#pragma once

// Report emission: one CSV per experiment plus a JSON metadata sidecar.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sfburgers/harness.hpp"

namespace sfburgers {

inline constexpr const char* report_csv_header = "eps_or_delta,error_mean,error_stderr,n_ok,n_failed";
inline constexpr int report_schema_version = 1;

inline void write_report_csv(std::ostream& os, const RateReport& rep) {
  const auto old = os.precision(17);
  os << report_csv_header << '\n';
  for (const auto& r : rep.rows)
    os << r.param << ',' << r.error_mean << ',' << r.error_stderr << ',' << r.n_ok << ',' << r.n_failed << '\n';
  os.precision(old);
}

inline std::string report_csv(const RateReport& rep) {
  std::ostringstream os;
  write_report_csv(os, rep);
  return os.str();
}

inline nlohmann::json report_json(const RateReport& rep) {
  nlohmann::json j = rep.metadata;
  j["schema_version"] = report_schema_version;
  j["param_name"] = rep.param_name;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rep.rows)
    j["rows"].push_back({{rep.param_name, r.param},
                         {"error_mean", r.error_mean},
                         {"error_stderr", r.error_stderr},
                         {"n_ok", r.n_ok},
                         {"n_failed", r.n_failed}});
  return j;
}

/// Writes <dir>/<experiment>.csv and <dir>/<experiment>.json; returns the CSV path.
inline std::filesystem::path write_report(const std::filesystem::path& dir, const RateReport& rep) {
  std::filesystem::create_directories(dir);
  const auto csv = dir / (rep.experiment + ".csv");
  const auto meta = dir / (rep.experiment + ".json");
  {
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv.string());
    write_report_csv(os, rep);
  }
  {
    std::ofstream os(meta);
    if (!os) throw std::runtime_error("cannot write " + meta.string());
    // Doubles are dumped in shortest round-trip form.
    os << report_json(rep).dump(2) << '\n';
  }
  return csv;
}

}  // namespace sfburgers
