#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "subradcool/lindblad.hpp"
#include "subradcool/scenarios.hpp"

namespace subradcool::cli {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kUnits =
    "frequencies, detunings and rates in units of gamma0 (single-atom decay rate); "
    "lengths in units of lambda0; times in units of 1/gamma0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a result fails a validity guard (truncation too small, heating).
struct ValidityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& experiment_kinds();

struct RunConfig {
  std::string experiment;
  GeometrySpec geometry;
  TrapProfile trap;
  double rabi = 1e-3;
  Vec3d drive_direction = Vec3d(0, 0, 1);
  std::optional<double> detuning;  // empty: "auto"
  double eta = 0.02;
  Truncation truncation = Truncation::shared_single();
  std::string out_dir = ".";
  std::string name;  // output file stem; defaults to the experiment kind
  json parameters;   // experiment-specific, defaults filled in

  DriveField drive(double detuning_value) const;
};

// Strict: unknown keys, wrong types and out-of-range values throw ConfigError.
// A top-level "summary" key is accepted and ignored so summaries re-run.
RunConfig parse_config(const json& j);
RunConfig load_config(const std::string& path);
json to_json(const RunConfig& c);  // fully resolved

// Locale-independent shortest-safe formatting with 17 significant digits.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::pair<std::string, std::string>> meta;  // '#' header lines "key: value"
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string meta_value(const std::string& key) const;  // "" when absent
  int column(const std::string& name) const;             // -1 when absent
  void add_row(std::vector<std::string> r);
  void write(const std::string& path) const;
};

CsvTable read_csv(const std::string& path);

struct CompareRow {
  std::string key;  // grid values joined with ','
  std::string column;
  double a = 0, b = 0, deviation = 0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double max_deviation = 0;
};

struct GridMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Grid columns come from the "grid" header line; value columns present in both
// tables are compared point by point, relative to |b| (absolute when b == 0).
CompareReport compare_tables(const CsvTable& a, const CsvTable& b);

}  // namespace subradcool::cli
