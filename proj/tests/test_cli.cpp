#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "config.hpp"

using namespace subradcool;
using namespace subradcool::cli;
namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* b = std::getenv("SUBRADCOOL_BIN");
  REQUIRE_MESSAGE(b != nullptr, "SUBRADCOOL_BIN is not set");
  return b;
}

fs::path scratch_dir() {
  static const fs::path root = [] {
    std::random_device rd;
    fs::path p = fs::temp_directory_path() / ("subradcool_cli_" + std::to_string(rd()));
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path write_json(const std::string& name, const json& j) {
  const fs::path p = scratch_dir() / name;
  std::ofstream(p) << j.dump();
  return p;
}

struct Proc {
  int code = -1;
  std::string out;
};

Proc run(const std::string& args) {
  const fs::path log = scratch_dir() / "log.txt";
  const std::string cmd = "'" + binary() + "' " + args + " > '" + log.string() + "' 2>&1";
  const int st = std::system(cmd.c_str());
  Proc p;
  p.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  p.out = ss.str();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json spectrum_config(int atoms) {
  return {{"experiment", "spectrum"}, {"geometry", {{"kind", "chain"}, {"atoms", atoms}, {"spacing", 0.2}}}};
}

}  // namespace

TEST_CASE("numbers are written with 17 significant digits and a dot") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(-2.5) == "-2.5");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
  for (double x : {1e-300, 3.0e-7, 123456789.123, 2.0 / 3.0, -1.0e22}) {
    const std::string s = format_number(x);
    CHECK(s.find(',') == std::string::npos);
    CHECK(std::stod(s) == x);
  }
}

TEST_CASE("config parsing is strict and fills defaults") {
  const RunConfig c = parse_config(spectrum_config(4));
  CHECK(c.geometry.atoms == 4);
  CHECK(c.name == "spectrum");
  const RunConfig cr = parse_config({{"experiment", "critical-rate"}});
  CHECK(cr.parameters.at("delta_nu") == json::array({1e-5, 1e-4, 1e-3}));
  CHECK_FALSE(cr.detuning.has_value());

  json bad = spectrum_config(4);
  bad["geometry"]["atomz"] = 3;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = spectrum_config(4);
  bad["geometry"]["atoms"] = "four";
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  CHECK_THROWS_AS(parse_config({{"experiment", "cool"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"experiment", "ensemble"}, {"parameters", {{"realizations", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"experiment", "spectrum"}, {"drive", {{"detuning", "later"}}}}), ConfigError);
}

TEST_CASE("resolved config round-trips through JSON") {
  const json src = {{"experiment", "cool-effective"},
                    {"geometry", {{"atoms", 3}, {"spacing", 0.15}, {"polarization", "x"}}},
                    {"trap", {{"profile", "gradient"}, {"nu_bar", 2.0}, {"delta_nu", 1e-3}}},
                    {"drive", {{"rabi", 2e-3}, {"detuning", -2.5}}},
                    {"parameters", {{"nu_bar", {1.0, 2.0}}}}};
  const json once = to_json(parse_config(src));
  CHECK(to_json(parse_config(once)) == once);
  CHECK(parse_config(once).detuning.value() == -2.5);
}

TEST_CASE("table comparison") {
  CsvTable a;
  a.meta = {{"atoms", "2"}, {"grid", "x"}};
  a.columns = {"x", "y", "only_a"};
  a.add_row({"1", "1.0", "5"});
  a.add_row({"2", "4.0", "6"});
  CsvTable b = a;
  CHECK(compare_tables(a, b).max_deviation == 0.0);
  b.rows[1][1] = "5.0";
  const auto r = compare_tables(a, b);
  CHECK(r.max_deviation == doctest::Approx(0.2));
  b.columns[2] = "only_b";
  CHECK(compare_tables(a, b).rows.size() == 2);  // only the shared value column
  b = a;
  b.rows[1][0] = "3";
  CHECK_THROWS_AS(compare_tables(a, b), GridMismatch);
  b = a;
  b.meta[0].second = "3";
  CHECK_THROWS_AS(compare_tables(a, b), GridMismatch);
}

TEST_CASE("run writes a CSV with metadata and a summary that re-runs identically") {
  const fs::path cfg = write_json("spec.json", spectrum_config(5));
  const fs::path out1 = scratch_dir() / "o1", out2 = scratch_dir() / "o2";
  REQUIRE(run("run --config '" + cfg.string() + "' --out '" + out1.string() + "'").code == 0);
  const std::string csv = slurp(out1 / "spectrum.csv");
  CHECK(csv.rfind("# subradcool: ", 0) == 0);
  CHECK(csv.find("# units: ") != std::string::npos);
  CHECK(csv.find("# atoms: 5\n") != std::string::npos);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(csv.find("mode_index,J_lambda,gamma_lambda\n") != std::string::npos);

  const json summary = json::parse(slurp(out1 / "spectrum.json"));
  CHECK(summary.at("summary").at("csv") == "spectrum.csv");
  REQUIRE(run("run --config '" + (out1 / "spectrum.json").string() + "' --out '" + out2.string() + "'").code == 0);
  CHECK(slurp(out2 / "spectrum.csv") == csv);

  const auto cmp = run("compare '" + (out1 / "spectrum.csv").string() + "' '" + (out2 / "spectrum.csv").string() + "'");
  CHECK(cmp.code == 0);
  CHECK(cmp.out.find("max_relative_deviation: 0") != std::string::npos);
}

TEST_CASE("compare refuses tables with a different atom count") {
  const fs::path c4 = write_json("s4.json", spectrum_config(4)), c6 = write_json("s6.json", spectrum_config(6));
  const fs::path o4 = scratch_dir() / "n4", o6 = scratch_dir() / "n6";
  REQUIRE(run("run --config '" + c4.string() + "' --out '" + o4.string() + "'").code == 0);
  REQUIRE(run("run --config '" + c6.string() + "' --out '" + o6.string() + "'").code == 0);
  CHECK(run("compare '" + (o4 / "spectrum.csv").string() + "' '" + (o6 / "spectrum.csv").string() + "'").code == 1);
}

TEST_CASE("exit codes: schema errors and bad output paths give 1") {
  json bad = spectrum_config(3);
  bad["geometry"]["atomz"] = 3;
  const auto p = run("run --config '" + write_json("bad.json", bad).string() + "'");
  CHECK(p.code == 1);
  CHECK(p.out.find("atomz") != std::string::npos);
  CHECK(run("run --config '" + (scratch_dir() / "missing.json").string() + "'").code == 1);
  // a two-atom-only experiment on three atoms
  json rm = {{"experiment", "regime-map"}, {"geometry", {{"atoms", 3}}}};
  CHECK(run("run --config '" + write_json("rm.json", rm).string() + "'").code == 1);
  const fs::path blocker = scratch_dir() / "afile";
  std::ofstream(blocker) << "x";
  const fs::path cfg = write_json("ok.json", spectrum_config(2));
  CHECK(run("run --config '" + cfg.string() + "' --out '" + (blocker / "sub").string() + "'").code == 1);
}

TEST_CASE("exit code 3 when the truncation guard trips, outputs still written") {
  // a single atom near the Doppler regime holds far more than one phonon
  json c = {{"experiment", "cool-full"},
            {"geometry", {{"atoms", 1}}},
            {"trap", {{"nu_bar", 0.25}}},
            {"drive", {{"rabi", 0.05}}},
            {"parameters", {{"nu_bar", {0.25}}, {"samples", 20}}}};
  const fs::path out = scratch_dir() / "guard";
  const auto p = run("run --config '" + write_json("guard.json", c).string() + "' --out '" + out.string() + "'");
  CHECK(p.code == 3);
  CHECK(fs::exists(out / "cool-full.csv"));
  const json s = json::parse(slurp(out / "cool-full.json"));
  CHECK(s.at("summary").contains("validity_failure"));
  c["parameters"]["allow_unreliable"] = true;
  CHECK(run("run --config '" + write_json("guard2.json", c).string() + "' --out '" + out.string() + "'").code == 0);
}

TEST_CASE("seed override lands in the metadata") {
  const fs::path out = scratch_dir() / "seed";
  const fs::path cfg = write_json("seed.json", spectrum_config(2));
  REQUIRE(run("run --config '" + cfg.string() + "' --out '" + out.string() + "' --seed-override 99").code == 0);
  CHECK(read_csv((out / "spectrum.csv").string()).meta_value("seed") == "99");
}
