#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "config.hpp"
#include "subradcool/baselines.hpp"

using namespace subradcool;
using namespace subradcool::cli;

namespace {

struct Output {
  CsvTable table;
  json results = json::object();
  std::vector<std::string> warnings;
  std::string guard_failure;  // non-empty: exit 3 after writing
  std::vector<std::string> paths;
};

std::string num(double v) { return format_number(v); }

std::vector<double> grid_values(const json& g) {
  if (g.is_array()) return g.get<std::vector<double>>();
  const int n = g.at("points").get<int>();
  const double a = std::log10(g.at("from").get<double>()), b = std::log10(g.at("to").get<double>());
  return n == 1 ? std::vector<double>{std::pow(10.0, a)} : logspace(a, b, n);
}

void start_table(Output& o, const RunConfig& c, int atoms, const std::string& grid, std::vector<std::string> columns) {
  o.table.meta = {{"subradcool", kVersion},
                  {"experiment", c.experiment},
                  {"units", kUnits},
                  {"atoms", std::to_string(atoms)},
                  {"seed", std::to_string(c.trap.seed)},
                  {"grid", grid}};
  o.table.columns = std::move(columns);
}

EmitterArray array_at(const RunConfig& c, double nu_bar) {
  TrapProfile t = c.trap;
  t.nu_bar = nu_bar;
  return make_array(c.geometry, t, c.eta);
}

// Detuning from the config, or the red sideband of the best collective mode.
DriveField resolve_drive(const RunConfig& c, const EmitterArray& a, std::vector<std::string>* warnings = nullptr) {
  if (c.detuning) return c.drive(*c.detuning);
  if (a.size() == 2 && c.geometry.kind == GeometryKind::Chain) return c.drive(two_atom_detuning(a));
  const auto mc = select_cooling_mode(a, c.drive(0.0));
  if (mc.mode < 0) {
    if (warnings) warnings->push_back("no stable cooling mode; using the independent-atom optimum");
    return c.drive(independent_optimal_detuning(a.mean_trap_frequency()));
  }
  return c.drive(mc.detuning);
}

std::vector<double> nu_bar_grid(const RunConfig& c) {
  auto v = c.parameters.at("nu_bar").get<std::vector<double>>();
  if (v.empty()) v.push_back(c.trap.nu_bar);
  for (double x : v)
    if (!(x > 0.0)) throw ConfigError("parameters.nu_bar: values must be positive");
  return v;
}

Output run_spectrum(const RunConfig& c) {
  Output o;
  const EmitterArray a = make_array(c.geometry, c.trap, c.eta);
  const auto spec = collective_modes(build_spin_hamiltonian(a, c.drive(0.0)), 0.0);
  std::vector<int> order(spec.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return spec.linewidth(x) < spec.linewidth(y); });
  start_table(o, c, a.size(), "mode_index", {"mode_index", "J_lambda", "gamma_lambda"});
  for (size_t k = 0; k < order.size(); ++k)
    o.table.add_row({std::to_string(k), num(spec.shift(order[k])), num(spec.linewidth(order[k]))});
  o.results["completeness_error"] = spec.completeness_error();
  return o;
}

Output run_cool(const RunConfig& c, bool full, int threads) {
  Output o;
  const auto nus = nu_bar_grid(c);
  const int n = static_cast<int>(nus.size());
  std::vector<double> nss(n, kNaN), nind(n, kNaN), rate(n, kNaN), det(n, kNaN), edge(n, kNaN);
  std::vector<std::vector<std::string>> warn(n);
  std::vector<int> unreliable(n, 0);
  const RateModel model = full ? RateModel::Auto : parse_rate_model(c.parameters.at("rate_model").get<std::string>());
  parallel_for(n, threads, [&](int k) {
    const EmitterArray a = array_at(c, nus[k]);
    const DriveField d = resolve_drive(c, a, &warn[k]);
    det[k] = d.detuning;
    nind[k] = independent_occupation(a, c.rabi);
    try {
      if (!full) {
        const auto e = solve_effective(a, d, model);
        nss[k] = e.nbar;
        rate[k] = -2.0 * stability_margin(e.rates);
        for (const auto& w : e.warnings) warn[k].push_back(w);
      } else {
        CoolingOptions co;
        co.samples = c.parameters.at("samples").get<int>();
        co.horizon = c.parameters.at("horizon").get<double>();
        co.rate_guess = effective_rate_guess(a, d);
        const auto curve = cooling_curve(a, d, c.truncation, co);
        nss[k] = curve.nbar_ss;
        rate[k] = curve.fit.rate;
        edge[k] = curve.edge_population;
        unreliable[k] = !curve.reliable;
        for (const auto& w : curve.warnings) warn[k].push_back(w);
      }
    } catch (const HeatingError& e) {
      warn[k].push_back(e.what());
    }
  });
  std::vector<std::string> cols{"nu_bar", "n_ss", "n_ind", "ratio", "rate", "detuning"};
  if (full) cols.push_back("edge_population");
  start_table(o, c, c.geometry.atoms + (c.geometry.kind == GeometryKind::RingPlusCenter), "nu_bar", cols);
  for (int k = 0; k < n; ++k) {
    std::vector<std::string> row{num(nus[k]), num(nss[k]), num(nind[k]), num(nss[k] / nind[k]), num(rate[k]),
                                 num(det[k])};
    if (full) row.push_back(num(edge[k]));
    o.table.add_row(row);
    for (const auto& w : warn[k]) o.warnings.push_back("nu_bar=" + num(nus[k]) + ": " + w);
  }
  if (full) {
    o.results["truncation"] = c.truncation.describe();
    if (std::any_of(unreliable.begin(), unreliable.end(), [](int u) { return u; }) &&
        !c.parameters.at("allow_unreliable").get<bool>())
      o.guard_failure = "steady state reaches the outermost kept phonon shell";
  }
  return o;
}

Output run_regime_map(const RunConfig& c, int threads) {
  if (c.geometry.atoms != 2 || c.geometry.kind != GeometryKind::Chain)
    throw ConfigError("regime-map: needs a two-atom chain geometry");
  Output o;
  const auto dnu = grid_values(c.parameters.at("delta_nu"));
  const auto rabi = grid_values(c.parameters.at("rabi"));
  const auto pts = regime_map(c.geometry.spacing, c.geometry.polarization, c.trap.nu_bar, c.eta, dnu, rabi, threads);
  start_table(o, c, 2, "delta_nu,Omega", {"delta_nu", "Omega", "n_ratio", "regime_label", "n_ss", "n_ind"});
  for (const auto& p : pts) {
    o.table.add_row({num(p.delta_nu), num(p.rabi), num(p.ratio), to_string(p.regime.label), num(p.nbar), num(p.n_ind)});
    if (!p.ok) o.warnings.push_back("delta_nu=" + num(p.delta_nu) + " Omega=" + num(p.rabi) + ": " + p.message);
  }
  const auto pred = two_atom_predictions(c.geometry.spacing, parse_polarization(c.geometry.polarization), c.eta, c.trap.nu_bar);
  o.results["gamma_A"] = pred.gamma_A;
  return o;
}

Output run_critical(const RunConfig& c, int threads) {
  Output o;
  const auto& p = c.parameters;
  const auto dnu = grid_values(p.at("delta_nu"));
  const std::string def = p.at("definition").get<std::string>();
  if (def != "both" && def != "optimal" && def != "independent")
    throw ConfigError("parameters.definition: expected optimal, independent or both");
  CriticalRateOptions opt;
  opt.rabi_min = p.at("rabi_min").get<double>();
  opt.rabi_max = p.at("rabi_max").get<double>();
  opt.points_per_decade = p.at("points_per_decade").get<int>();
  opt.tolerance = p.at("tolerance").get<double>();
  const int n = static_cast<int>(dnu.size());
  std::vector<CriticalRate> opt_res(n), ind_res(n);
  parallel_for(n, threads, [&](int k) {
    RunConfig ck = c;
    ck.trap.kind = TrapProfile::Kind::Gradient;
    ck.trap.delta_nu = dnu[k];
    const EmitterArray a = make_array(ck.geometry, ck.trap, ck.eta);
    const DriveField d = resolve_drive(ck, a);
    if (def != "independent") opt_res[k] = critical_rate_scan(a, d, c.truncation, CriticalDefinition::Optimal, opt);
    if (def != "optimal") ind_res[k] = critical_rate_scan(a, d, c.truncation, CriticalDefinition::Independent, opt);
  });
  start_table(o, c, c.geometry.atoms, "delta_nu",
              {"delta_nu", "gamma_c", "omega_c", "n_opt", "gamma_c_prime", "omega_c_prime", "n_ind"});
  for (int k = 0; k < n; ++k) {
    const auto& a = opt_res[k];
    const auto& b = ind_res[k];
    o.table.add_row({num(dnu[k]), num(a.rate), num(a.rabi), num(a.reference), num(b.rate), num(b.rabi), num(b.reference)});
    for (const auto* r : {&a, &b})
      if (!r->message.empty()) o.warnings.push_back("delta_nu=" + num(dnu[k]) + ": " + r->message);
  }
  return o;
}

Output run_ring(const RunConfig& c) {
  if (c.geometry.kind != GeometryKind::RingPlusCenter) throw ConfigError("ring-target: needs ring_plus_center geometry");
  Output o;
  const auto& p = c.parameters;
  RingTargetOptions opt;
  opt.rabi = c.rabi;
  opt.nu_t = p.at("nu_t").get<double>();
  opt.eta_t = p.at("eta_t").get<double>();
  opt.polarization = c.geometry.polarization;
  opt.n0 = p.at("n0").get<double>();
  opt.horizon = p.at("horizon").get<double>();
  opt.samples = p.at("samples").get<int>();
  const double R = p.at("radius").get<double>();
  const int N = c.geometry.atoms;
  const auto r = p.at("delta_tS").is_string() ? ring_target_cooling_dark(N, R, opt)
                                              : ring_target_cooling(N, R, p.at("delta_tS").get<double>(), opt);
  start_table(o, c, N + 1, "time", {"time", "n_t"});
  for (size_t k = 0; k < r.times.size(); ++k) o.table.add_row({num(r.times[k]), num(r.n_t[k])});
  o.results = {{"dark_detuning", r.dark_detuning}, {"delta_tS", r.delta_tS}, {"detuning", r.detuning},
               {"gamma_d", r.gamma_d},             {"rate", r.rate},         {"n_ss", r.n_ss},
               {"n_isolated", r.n_isolated}};
  return o;
}

Output run_sequential(const RunConfig& c) {
  Output o;
  const EmitterArray a = make_array(c.geometry, c.trap, c.eta);
  std::vector<std::vector<int>> blocks = c.parameters.at("blocks").get<std::vector<std::vector<int>>>();
  if (blocks.empty())
    for (int j = 0; j < a.size(); j += 2) blocks.push_back(j + 1 < a.size() ? std::vector<int>{j, j + 1} : std::vector<int>{j});
  DriveField d;
  if (c.detuning) {
    d = c.drive(*c.detuning);
  } else {
    // sideband of the first block taken on its own
    EmitterArray sub = a;
    sub.positions.clear();
    sub.trap_frequencies.resize(static_cast<int>(blocks[0].size()), a.trap_frequencies.cols());
    for (size_t k = 0; k < blocks[0].size(); ++k) {
      const int j = blocks[0][k];
      if (j < 0 || j >= a.size()) throw ConfigError("parameters.blocks: atom index out of range");
      sub.positions.push_back(a.positions[j]);
      sub.trap_frequencies.row(k) = a.trap_frequencies.row(j);
    }
    sub.detuning_offsets = RVec::Zero(sub.size());
    RunConfig cs = c;
    cs.geometry.atoms = sub.size();
    d = resolve_drive(cs, sub, &o.warnings);
  }
  SequentialOptions opt;
  opt.block_detuning = c.parameters.at("block_detuning").get<double>();
  opt.horizon = c.parameters.at("horizon").get<double>();
  opt.samples = c.parameters.at("samples").get<int>();
  const auto runs = sequential_protocol(a, blocks, d, c.truncation, opt);
  start_table(o, c, a.size(), "block,time", {"block", "time", "n_block"});
  o.results["detuning"] = d.detuning;
  o.results["blocks"] = json::array();
  for (size_t b = 0; b < runs.size(); ++b) {
    const auto& r = runs[b];
    for (size_t k = 0; k < r.curve.times.size(); ++k)
      o.table.add_row({std::to_string(b), num(r.curve.times[k]), num(r.curve.mean_phonons(k))});
    o.results["blocks"].push_back({{"atoms", r.atoms},
                                   {"rate", r.curve.fit.rate},
                                   {"n_ss", r.curve.nbar_ss},
                                   {"n_ss_conditional", r.n_ss_conditional},
                                   {"max_drift", r.max_drift},
                                   {"reliable", r.curve.reliable}});
    for (const auto& w : r.curve.warnings) o.warnings.push_back("block " + std::to_string(b) + ": " + w);
  }
  return o;
}

Output run_ensemble(const RunConfig& c, int threads) {
  Output o;
  EnsembleOptions opt;
  opt.realizations = c.parameters.at("realizations").get<int>();
  opt.pipeline = parse_pipeline(c.parameters.at("pipeline").get<std::string>());
  opt.truncation = c.truncation;
  opt.threads = threads;
  GeometrySpec g = c.geometry;
  const auto res = ensemble_sweep(g, c.trap, c.eta, c.rabi, opt);
  start_table(o, c, c.geometry.atoms + (c.geometry.kind == GeometryKind::RingPlusCenter), "realization",
              {"realization", "nbar", "rate", "detuning", "mode", "ok"});
  for (const auto& p : res.points) {
    o.table.add_row({std::to_string(p.realization), num(p.nbar), num(p.rate), num(p.detuning), std::to_string(p.mode),
                     p.ok ? "1" : "0"});
    if (!p.message.empty()) o.warnings.push_back("realization " + std::to_string(p.realization) + ": " + p.message);
  }
  auto pct = [](const Percentiles& q) { return json{{"p25", q.p25}, {"median", q.median}, {"p75", q.p75}}; };
  o.results = {{"nbar", pct(res.nbar)}, {"rate", pct(res.rate)}, {"n_ind", res.n_ind}};
  return o;
}

Output dispatch(const RunConfig& c, int threads) {
  const auto& k = c.experiment;
  if (k == "spectrum") return run_spectrum(c);
  if (k == "cool-effective") return run_cool(c, false, threads);
  if (k == "cool-full") return run_cool(c, true, threads);
  if (k == "regime-map") return run_regime_map(c, threads);
  if (k == "critical-rate") return run_critical(c, threads);
  if (k == "ring-target") return run_ring(c);
  if (k == "sequential") return run_sequential(c);
  return run_ensemble(c, threads);
}

// NaN/inf are not JSON; store them as strings.
json sanitize(const json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    return std::isfinite(v) ? j : json(format_number(v));
  }
  if (j.is_structured()) {
    json out = j;
    for (auto it = out.begin(); it != out.end(); ++it) *it = sanitize(*it);
    return out;
  }
  return j;
}

int run_command(const std::string& config_path, const std::string& out_dir, int threads,
                const std::optional<std::uint64_t>& seed) {
  RunConfig c;
  try {
    c = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 1;
  }
  if (!out_dir.empty()) c.out_dir = out_dir;
  if (seed) c.trap.seed = *seed;
  if (threads < 1) {
    std::cerr << "schema error: --threads must be at least 1\n";
    return 1;
  }

  Output o;
  try {
    o = dispatch(c, threads);
  } catch (const ConfigError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }

  try {
    std::filesystem::create_directories(c.out_dir);
    const auto base = std::filesystem::path(c.out_dir) / c.name;
    const std::string csv = base.string() + ".csv", summary = base.string() + ".json";
    for (const auto& w : o.warnings) o.table.meta.emplace_back("warning", w);
    o.table.write(csv);

    json s = to_json(c);
    s["summary"] = {{"version", kVersion},
                    {"units", kUnits},
                    {"csv", std::filesystem::path(csv).filename().string()},
                    {"warnings", o.warnings},
                    {"results", sanitize(o.results)}};
    if (!o.guard_failure.empty()) s["summary"]["validity_failure"] = o.guard_failure;
    std::ofstream f(summary, std::ios::binary);
    f << s.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + summary);
    o.paths = {csv, summary};
  } catch (const std::exception& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return 1;
  }

  for (const auto& w : o.warnings) std::cerr << "warning: " << w << '\n';
  if (!o.guard_failure.empty()) {
    std::cerr << "validity guard: " << o.guard_failure << '\n';
    return 3;
  }
  for (const auto& p : o.paths) std::cout << p << '\n';
  return 0;
}

int compare_command(const std::string& a, const std::string& b) {
  CompareReport rep;
  try {
    rep = compare_tables(read_csv(a), read_csv(b));
  } catch (const GridMismatch& e) {
    std::cerr << "grid mismatch: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "point,column,a,b,relative_deviation\n";
  for (const auto& r : rep.rows)
    std::cout << '"' << r.key << "\"," << r.column << ',' << format_number(r.a) << ',' << format_number(r.b) << ','
              << format_number(r.deviation) << '\n';
  std::cout << "max_relative_deviation: " << format_number(rep.max_deviation) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooling of interacting emitter arrays"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  std::string config, out;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  run->add_option("--config", config, "JSON config")->required();
  run->add_option("--out", out, "Output directory (overrides output.dir)");
  run->add_option("--threads", threads, "Worker threads");
  run->add_option("--seed-override", seed, "Replace the config seed");

  auto* cmp = app.add_subcommand("compare", "Per-point relative deviation between two CSV outputs");
  std::string a, b;
  cmp->add_option("a", a, "CSV output")->required();
  cmp->add_option("b", b, "Reference CSV output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (*run) return run_command(config, out, threads, seed);
  return compare_command(a, b);
}
