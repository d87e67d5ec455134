#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace subradcool::cli {

namespace {

// Experiment-specific parameter defaults; the key set is the schema.
json parameter_defaults(const std::string& kind) {
  if (kind == "spectrum") return json::object();
  if (kind == "cool-effective") return {{"nu_bar", json::array()}, {"rate_model", "auto"}};
  if (kind == "cool-full")
    return {{"nu_bar", json::array()}, {"samples", 200}, {"horizon", 0.0}, {"allow_unreliable", false}};
  if (kind == "regime-map")
    return {{"delta_nu", {{"from", 1e-7}, {"to", 1.0}, {"points", 12}}},
            {"rabi", {{"from", 1e-4}, {"to", 1.0}, {"points", 12}}}};
  if (kind == "critical-rate")
    return {{"delta_nu", {1e-5, 1e-4, 1e-3}}, {"definition", "both"}, {"rabi_min", 1e-4},
            {"rabi_max", 1.0},  {"points_per_decade", 12}, {"tolerance", 1.1}};
  if (kind == "ring-target")
    return {{"radius", 0.2}, {"delta_tS", "dark"}, {"nu_t", 50.0}, {"eta_t", 0.02},
            {"n0", 1.0},     {"horizon", 0.0},     {"samples", 200}};
  if (kind == "sequential")
    return {{"blocks", json::array()}, {"block_detuning", -40.0}, {"horizon", 0.0}, {"samples", 200}};
  if (kind == "ensemble") return {{"realizations", 30}, {"pipeline", "effective"}};
  throw ConfigError("unknown experiment kind '" + kind + "'");
}

// Keys whose value may be either a grid object or a list.
bool is_grid_key(const std::string& k) { return k == "delta_nu" || k == "rabi"; }

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

double get_number(const json& j, const std::string& key, double def, const std::string& where) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + "." + key + ": must be finite");
  return x;
}

double get_positive(const json& j, const std::string& key, double def, const std::string& where) {
  const double x = get_number(j, key, def, where);
  if (!(x > 0.0)) throw ConfigError(where + "." + key + ": must be positive");
  return x;
}

int get_int(const json& j, const std::string& key, int def, const std::string& where) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

std::string get_string(const json& j, const std::string& key, const std::string& def, const std::string& where) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

Vec3d get_vector(const json& j, const std::string& key, const Vec3d& def, const std::string& where) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); }))
    throw ConfigError(where + "." + key + ": expected three numbers");
  Vec3d r(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  if (!(r.norm() > 0.0)) throw ConfigError(where + "." + key + ": zero vector");
  return r.normalized();
}

void check_grid(const json& v, const std::string& where) {
  if (v.is_array()) {
    for (const auto& x : v)
      if (!x.is_number() || !(x.get<double>() > 0.0)) throw ConfigError(where + ": grid values must be positive numbers");
    return;
  }
  check_keys(v, where, {"from", "to", "points"});
  const double from = get_positive(v, "from", 1.0, where), to = get_positive(v, "to", 1.0, where);
  const int n = get_int(v, "points", 1, where);
  if (n < 1 || (n == 1 && from != to)) throw ConfigError(where + ".points: need at least 2 points for a range");
}

// Type of each supplied parameter must match the default's.
json resolve_parameters(const std::string& kind, const json& given) {
  json p = parameter_defaults(kind);
  if (given.is_null()) return p;
  std::set<std::string> allowed;
  for (auto it = p.begin(); it != p.end(); ++it) allowed.insert(it.key());
  check_keys(given, "parameters", allowed);
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    const json& d = p.at(k);
    const std::string where = "parameters." + k;
    if (is_grid_key(k)) {
      check_grid(v, where);
    } else if (k == "delta_tS") {
      if (!(v.is_number() || v == "dark")) throw ConfigError(where + ": expected a number or \"dark\"");
    } else if (d.is_number_integer()) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    } else if (d.is_number()) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
    } else if (d.is_boolean()) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
    } else if (d.is_string()) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
    } else if (d.is_array()) {
      if (!v.is_array()) throw ConfigError(where + ": expected a list");
    }
    p[k] = v;
  }
  return p;
}

std::string trap_kind_name(TrapProfile::Kind k) {
  switch (k) {
    case TrapProfile::Kind::Uniform: return "uniform";
    case TrapProfile::Kind::Gradient: return "gradient";
    default: return "normal";
  }
}

std::string truncation_kind_name(Truncation::Kind k) {
  switch (k) {
    case Truncation::Kind::PerAtomCutoff: return "per_atom_cutoff";
    case Truncation::Kind::SharedSingleExcitation: return "shared";
    default: return "total_phonons";
  }
}

template <class F>
auto wrap(const std::string& where, F f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"spectrum",    "cool-effective", "cool-full",  "regime-map",
                                              "critical-rate", "ring-target",  "sequential", "ensemble"};
  return kinds;
}

DriveField RunConfig::drive(double detuning_value) const {
  DriveField d;
  d.rabi = rabi;
  d.direction = drive_direction;
  d.detuning = detuning_value;
  return d;
}

RunConfig parse_config(const json& j) {
  check_keys(j, "config",
             {"experiment", "geometry", "trap", "drive", "eta", "truncation", "output", "seed", "parameters", "summary"});
  RunConfig c;
  if (!j.contains("experiment")) throw ConfigError("config: missing 'experiment'");
  c.experiment = get_string(j, "experiment", "", "config");
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end())
    throw ConfigError("unknown experiment kind '" + c.experiment + "'");

  const json none = json::object();
  const json& g = j.contains("geometry") ? j.at("geometry") : none;
  check_keys(g, "geometry", {"kind", "atoms", "spacing", "radius", "polarization", "motion_axis"});
  c.geometry.kind = wrap("geometry.kind", [&] { return parse_geometry_kind(get_string(g, "kind", "chain", "geometry")); });
  c.geometry.atoms = get_int(g, "atoms", 2, "geometry");
  if (c.geometry.atoms < 1) throw ConfigError("geometry.atoms: must be at least 1");
  c.geometry.spacing = get_positive(g, "spacing", 0.2, "geometry");
  c.geometry.radius = get_number(g, "radius", 0.0, "geometry");
  if (c.geometry.radius < 0) throw ConfigError("geometry.radius: must be non-negative");
  c.geometry.polarization = get_string(g, "polarization", "y", "geometry");
  wrap("geometry.polarization", [&] { return parse_polarization(c.geometry.polarization); });
  c.geometry.motion_axis = get_vector(g, "motion_axis", Vec3d(0, 0, 1), "geometry");

  const json& t = j.contains("trap") ? j.at("trap") : none;
  check_keys(t, "trap", {"profile", "nu_bar", "delta_nu", "sigma"});
  c.trap.kind = wrap("trap.profile", [&] { return parse_trap_kind(get_string(t, "profile", "uniform", "trap")); });
  c.trap.nu_bar = get_positive(t, "nu_bar", 20.0, "trap");
  c.trap.delta_nu = get_number(t, "delta_nu", 0.0, "trap");
  c.trap.sigma = get_number(t, "sigma", 0.0, "trap");
  if (c.trap.sigma < 0) throw ConfigError("trap.sigma: must be non-negative");

  const json& d = j.contains("drive") ? j.at("drive") : none;
  check_keys(d, "drive", {"rabi", "direction", "detuning"});
  c.rabi = get_positive(d, "rabi", 1e-3, "drive");
  c.drive_direction = get_vector(d, "direction", Vec3d(0, 0, 1), "drive");
  if (d.contains("detuning")) {
    const auto& v = d.at("detuning");
    if (v.is_number())
      c.detuning = get_number(d, "detuning", 0.0, "drive");
    else if (v != "auto")
      throw ConfigError("drive.detuning: expected a number or \"auto\"");
  }

  c.eta = get_positive(j, "eta", 0.02, "config");

  const json& tr = j.contains("truncation") ? j.at("truncation") : none;
  check_keys(tr, "truncation", {"kind", "cutoff"});
  c.truncation = wrap("truncation", [&] {
    return parse_truncation(get_string(tr, "kind", "shared", "truncation"), get_int(tr, "cutoff", 1, "truncation"));
  });

  const json& o = j.contains("output") ? j.at("output") : none;
  check_keys(o, "output", {"dir", "name"});
  c.out_dir = get_string(o, "dir", ".", "output");
  c.name = get_string(o, "name", c.experiment, "output");
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("output.name: must be a plain file stem");

  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    c.trap.seed = j.at("seed").get<std::uint64_t>();
  }

  c.parameters = resolve_parameters(c.experiment, j.contains("parameters") ? j.at("parameters") : json());
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  const auto& g = c.geometry;
  j["geometry"] = {{"kind", to_string(g.kind)},
                   {"atoms", g.atoms},
                   {"spacing", g.spacing},
                   {"radius", g.radius},
                   {"polarization", g.polarization},
                   {"motion_axis", {g.motion_axis.x(), g.motion_axis.y(), g.motion_axis.z()}}};
  j["trap"] = {{"profile", trap_kind_name(c.trap.kind)},
               {"nu_bar", c.trap.nu_bar},
               {"delta_nu", c.trap.delta_nu},
               {"sigma", c.trap.sigma}};
  j["drive"] = {{"rabi", c.rabi},
                {"direction", {c.drive_direction.x(), c.drive_direction.y(), c.drive_direction.z()}},
                {"detuning", c.detuning ? json(*c.detuning) : json("auto")}};
  j["eta"] = c.eta;
  j["truncation"] = {{"kind", truncation_kind_name(c.truncation.kind)}, {"cutoff", c.truncation.cutoff}};
  j["output"] = {{"dir", c.out_dir}, {"name", c.name}};
  j["seed"] = c.trap.seed;
  j["parameters"] = c.parameters;
  return j;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

std::string CsvTable::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return "";
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

void CsvTable::add_row(std::vector<std::string> r) {
  if (r.size() != columns.size()) throw std::logic_error("CsvTable: row width does not match the header");
  rows.push_back(std::move(r));
}

void CsvTable::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::runtime_error(where + ": not a number '" + s + "'");
  return v;
}

bool is_numeric(const std::string& s) {
  double v;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return s == "nan" || s == "inf" || s == "-inf" || (r.ec == std::errc() && r.ptr == s.data() + s.size());
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  CsvTable t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(' '), b = s.find_last_not_of(' ');
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      t.meta.emplace_back(trim(line.substr(1, colon - 1)), trim(line.substr(colon + 1)));
    } else if (!header) {
      t.columns = split(line, ',');
      header = true;
    } else {
      auto r = split(line, ',');
      if (r.size() != t.columns.size()) throw std::runtime_error(path + ": ragged row");
      t.rows.push_back(std::move(r));
    }
  }
  if (!header) throw std::runtime_error(path + ": no column header");
  return t;
}

CompareReport compare_tables(const CsvTable& a, const CsvTable& b) {
  if (a.meta_value("atoms") != b.meta_value("atoms"))
    throw GridMismatch("atom count differs (" + a.meta_value("atoms") + " vs " + b.meta_value("atoms") + ")");
  const auto grid = split(a.meta_value("grid"), ',');
  if (a.meta_value("grid") != b.meta_value("grid") || grid.empty())
    throw GridMismatch("grid columns differ ('" + a.meta_value("grid") + "' vs '" + b.meta_value("grid") + "')");
  if (a.rows.size() != b.rows.size())
    throw GridMismatch("point count differs (" + std::to_string(a.rows.size()) + " vs " + std::to_string(b.rows.size()) + ")");

  std::vector<int> ga, gb;
  for (const auto& c : grid) {
    ga.push_back(a.column(c));
    gb.push_back(b.column(c));
    if (ga.back() < 0 || gb.back() < 0) throw GridMismatch("grid column '" + c + "' missing");
  }
  std::vector<std::pair<int, int>> values;
  std::vector<std::string> names;
  for (size_t i = 0; i < a.columns.size(); ++i) {
    const auto& c = a.columns[i];
    if (std::find(grid.begin(), grid.end(), c) != grid.end()) continue;
    const int k = b.column(c);
    if (k < 0) continue;
    if (!a.rows.empty() && !(is_numeric(a.rows[0][i]) && is_numeric(b.rows[0][k]))) continue;
    values.emplace_back(static_cast<int>(i), k);
    names.push_back(c);
  }
  if (values.empty()) throw GridMismatch("no common value columns");

  CompareReport rep;
  for (size_t r = 0; r < a.rows.size(); ++r) {
    std::string key;
    for (size_t g = 0; g < grid.size(); ++g) {
      const double x = parse_double(a.rows[r][ga[g]], "grid"), y = parse_double(b.rows[r][gb[g]], "grid");
      if (std::abs(x - y) > 1e-12 * std::max(std::abs(x), std::abs(y)))
        throw GridMismatch("grid point " + std::to_string(r) + " differs in '" + grid[g] + "'");
      key += (g ? "," : "") + a.rows[r][ga[g]];
    }
    for (size_t v = 0; v < values.size(); ++v) {
      CompareRow row;
      row.key = key;
      row.column = names[v];
      row.a = parse_double(a.rows[r][values[v].first], names[v]);
      row.b = parse_double(b.rows[r][values[v].second], names[v]);
      if (std::isnan(row.a) && std::isnan(row.b))
        row.deviation = 0.0;
      else
        row.deviation = row.b == 0.0 ? std::abs(row.a) : std::abs(row.a - row.b) / std::abs(row.b);
      if (std::isnan(row.deviation)) row.deviation = std::numeric_limits<double>::infinity();
      rep.max_deviation = std::max(rep.max_deviation, row.deviation);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

}  // namespace subradcool::cli
