#include "subradcool/scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

namespace subradcool {

Polarization parse_polarization(const std::string& name) {
  if (name == "x") return polarization::x();
  if (name == "y") return polarization::y();
  if (name == "z") return polarization::z();
  if (name == "circular") return polarization::circular();
  throw std::invalid_argument("unknown polarization '" + name + "'");
}

GeometryKind parse_geometry_kind(const std::string& s) {
  if (s == "chain") return GeometryKind::Chain;
  if (s == "ring") return GeometryKind::Ring;
  if (s == "square") return GeometryKind::Square;
  if (s == "ring_plus_center") return GeometryKind::RingPlusCenter;
  throw std::invalid_argument("unknown geometry '" + s + "'");
}

std::string to_string(GeometryKind k) {
  switch (k) {
    case GeometryKind::Chain: return "chain";
    case GeometryKind::Ring: return "ring";
    case GeometryKind::Square: return "square";
    default: return "ring_plus_center";
  }
}

namespace {

double ring_radius(const GeometrySpec& s) {
  if (s.radius > 0.0) return s.radius;
  if (!(s.spacing > 0.0)) throw std::invalid_argument("build_geometry: spacing must be positive");
  if (s.atoms < 2) throw std::invalid_argument("build_geometry: a ring needs at least 2 atoms");
  return s.spacing / (2.0 * std::sin(M_PI / s.atoms));
}

}  // namespace

EmitterArray build_geometry(const GeometrySpec& s) {
  if (s.atoms < 1) throw std::invalid_argument("build_geometry: need at least one atom");
  EmitterArray a;
  a.polarization = parse_polarization(s.polarization);
  if (std::abs(s.motion_axis.norm() - 1.0) > 1e-12) throw std::invalid_argument("build_geometry: motion axis must be a unit vector");
  a.motion_axes = {s.motion_axis};
  switch (s.kind) {
    case GeometryKind::Chain:
    case GeometryKind::Square: {
      if (!(s.spacing > 0.0)) throw std::invalid_argument("build_geometry: spacing must be positive");
      const int side = s.kind == GeometryKind::Chain ? s.atoms : static_cast<int>(std::ceil(std::sqrt(double(s.atoms)) - 1e-12));
      for (int j = 0; j < s.atoms; ++j) a.positions.emplace_back(s.spacing * (j % side), s.spacing * (j / side), 0.0);
      break;
    }
    case GeometryKind::Ring:
    case GeometryKind::RingPlusCenter: {
      const double R = ring_radius(s);
      for (int j = 0; j < s.atoms; ++j) {
        const double phi = 2.0 * M_PI * j / s.atoms;
        a.positions.emplace_back(R * std::cos(phi), R * std::sin(phi), 0.0);
      }
      if (s.kind == GeometryKind::RingPlusCenter) a.positions.emplace_back(0.0, 0.0, 0.0);
      break;
    }
  }
  a.trap_frequencies = TrapProfile{}.frequencies(a.size());
  a.detuning_offsets = RVec::Zero(a.size());
  return a;
}

TrapProfile::Kind parse_trap_kind(const std::string& s) {
  if (s == "uniform") return TrapProfile::Kind::Uniform;
  if (s == "gradient") return TrapProfile::Kind::Gradient;
  if (s == "normal") return TrapProfile::Kind::Normal;
  throw std::invalid_argument("unknown trap profile '" + s + "'");
}

RVec gradient_frequencies(int n, double nu_bar, double delta_nu) {
  RVec nu(n);
  for (int j = 1; j <= n; ++j) nu(j - 1) = nu_bar + delta_nu * (j - n / 2 - 1);
  return nu;
}

RVec TrapProfile::frequencies(int n, int realization) const {
  if (!(nu_bar > 0.0)) throw std::invalid_argument("trap profile: nu_bar must be positive");
  RVec nu;
  switch (kind) {
    case Kind::Uniform: nu = RVec::Constant(n, nu_bar); break;
    case Kind::Gradient: nu = gradient_frequencies(n, nu_bar, delta_nu); break;
    case Kind::Normal: {
      if (sigma < 0.0) throw std::invalid_argument("trap profile: sigma must be non-negative");
      std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(realization)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> dist(0.0, 1.0);
      nu.resize(n);
      for (int j = 0; j < n; ++j) nu(j) = nu_bar + sigma * dist(rng);
      break;
    }
  }
  if (nu.size() > 0 && !(nu.minCoeff() > 0.0)) throw std::invalid_argument("trap profile produced a non-positive frequency");
  return nu;
}

EmitterArray make_array(const GeometrySpec& g, const TrapProfile& t, double eta, int realization) {
  EmitterArray a = build_geometry(g);
  a.trap_frequencies = t.frequencies(a.size(), realization);
  a.eta = eta;
  a.validate();
  return a;
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (n <= 0) return;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nt = std::clamp(threads, 1, n);
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

double self_curvature(const EmitterArray& a, int j) {
  const Vec3d& ax = a.motion_axes[0];
  return -2.0 * coupling_second_derivative(a.positions[j], a.positions[j], a.polarization, ax, ax).imag();
}

double fallback_rate(const EmitterArray& a, const DriveField& drive) {
  return a.eta * a.eta * drive.rabi * drive.rabi;
}

double block_rate_guess(const EmitterArray& a, const DriveField& drive, const std::vector<int>& block) {
  try {
    const auto r = solve_effective(a, drive);
    const RVec d = (r.rates.Rm - r.rates.Rp).diagonal().real();
    double g = std::numeric_limits<double>::infinity();
    for (int j : block) g = std::min(g, d(j));
    if (g > 0.0 && std::isfinite(g)) return g;
  } catch (const std::exception&) {
  }
  return fallback_rate(a, drive);
}

}  // namespace

double effective_rate_guess(const EmitterArray& a, const DriveField& drive) {
  try {
    const auto r = solve_effective(a, drive);
    const double g = -2.0 * stability_margin(r.rates);
    if (g > 0.0 && std::isfinite(g)) return g;
  } catch (const std::exception&) {
  }
  return fallback_rate(a, drive);
}

double optimal_array_occupation(const EmitterArray& a, const DriveField& drive) {
  a.validate();
  const auto g = coupling_tables(a);
  const auto steady = steady_displacements(a, drive, g);
  const CMat H = spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, drive.detuning);
  const auto spec = collective_modes(H, drive.detuning);
  const double nu_bar = a.mean_trap_frequency();
  double sum = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    const auto e = n_atom_rate_estimate(spec, j, nu_bar, a.eta, drive.rabi, steady.s(j), self_curvature(a, j));
    if (!(e.Rm > e.Rp)) throw HeatingError("optimal_array_occupation: heating at the array prediction");
    sum += e.Rp / (e.Rm - e.Rp);
  }
  return sum / a.size();
}

double independent_occupation(const EmitterArray& a, double rabi) {
  const double nu = a.mean_trap_frequency();
  return n_independent(nu, independent_optimal_detuning(nu), rabi, a.eta, true, self_curvature(a, 0)).nbar;
}

double two_atom_detuning(const EmitterArray& a) {
  if (a.size() != 2) throw std::invalid_argument("two_atom_detuning: needs exactly two atoms");
  const auto g = coupling_tables(a);
  const CMat H = spin_hamiltonian(g, a.lamb_dicke(), RVec::Zero(2), 0.0);
  const auto modes = collective_modes(H, 0.0);
  int anti = -1;
  for (int l = 0; l < 2; ++l)
    if ((modes.phi(0, l) * std::conj(modes.phi(1, l))).real() < 0.0) anti = l;
  if (anti < 0) throw NumericalError("two_atom_detuning: no antisymmetric mode found");
  return sideband_detuning(modes.shift(anti), modes.linewidth(anti), a.trap_frequencies(0, 0));
}

CriticalDefinition parse_critical_definition(const std::string& s) {
  if (s == "optimal" || s == "Gamma_c") return CriticalDefinition::Optimal;
  if (s == "independent" || s == "Gamma_c_prime") return CriticalDefinition::Independent;
  throw std::invalid_argument("unknown critical-rate definition '" + s + "'");
}

CriticalRate critical_rate_scan(const EmitterArray& a, const DriveField& drive_template, const Truncation& tr,
                                CriticalDefinition def, const CriticalRateOptions& opt) {
  a.validate();
  if (!(opt.rabi_min > 0.0) || !(opt.rabi_max > opt.rabi_min) || opt.points_per_decade < 1)
    throw std::invalid_argument("critical_rate_scan: bad drive grid");
  CriticalRate out;
  out.reference = def == CriticalDefinition::Optimal ? optimal_array_occupation(a, drive_template)
                                                     : independent_occupation(a, drive_template.rabi);
  const double lo = std::log10(opt.rabi_min), hi = std::log10(opt.rabi_max);
  const int npts = static_cast<int>(std::lround((hi - lo) * opt.points_per_decade)) + 1;
  out.rabi_grid = logspace(lo, hi, npts);

  auto drive_at = [&](double rabi) {
    DriveField d = drive_template;
    d.rabi = rabi;
    return d;
  };
  auto nbar_at = [&](double rabi) {
    try {
      const auto m = build_liouvillian(a, drive_at(rabi), tr);
      const auto o = observables(m, {steady_state(m)});
      return o.mean_phonons(0);
    } catch (const NumericalError&) {
      return kNaN;
    }
  };
  auto admissible = [&](double n) { return std::isfinite(n) && n <= opt.tolerance * out.reference; };
  auto rate_at = [&](double rabi) {
    const DriveField d = drive_at(rabi);
    CoolingOptions co;
    co.samples = opt.samples;
    co.rate_guess = effective_rate_guess(a, d);
    return cooling_curve(a, d, tr, co).fit.rate;
  };

  for (double r : out.rabi_grid) out.nbar_grid.push_back(nbar_at(r));
  out.rate_grid.assign(out.rabi_grid.size(), kNaN);
  if (!admissible(out.nbar_grid[0])) {
    out.message = "no admissible drive";
    return out;
  }
  int last = 0;
  while (last + 1 < npts && admissible(out.nbar_grid[last + 1])) ++last;
  double r_ok = out.rabi_grid[last], n_ok = out.nbar_grid[last];
  if (last + 1 < npts) {
    double r_bad = out.rabi_grid[last + 1];
    while (r_bad / r_ok > opt.bisection_ratio) {
      const double mid = std::sqrt(r_ok * r_bad);
      const double n = nbar_at(mid);
      if (admissible(n)) {
        r_ok = mid;
        n_ok = n;
      } else {
        r_bad = mid;
      }
    }
  }
  out.found = true;
  out.rabi = r_ok;
  out.nbar = n_ok;
  out.rate = rate_at(r_ok);
  if (def == CriticalDefinition::Independent) {
    for (int k = 0; k < npts; ++k) {
      if (!admissible(out.nbar_grid[k])) continue;
      out.rate_grid[k] = rate_at(out.rabi_grid[k]);
      if (out.rate_grid[k] > out.rate) {
        out.rate = out.rate_grid[k];
        out.rabi = out.rabi_grid[k];
        out.nbar = out.nbar_grid[k];
      }
    }
  }
  return out;
}

std::vector<BlockRun> sequential_protocol(const EmitterArray& a, const std::vector<std::vector<int>>& blocks,
                                          const DriveField& drive, const Truncation& tr,
                                          const SequentialOptions& opt) {
  a.validate();
  const int N = a.size();
  std::vector<int> seen(N, 0);
  for (const auto& b : blocks) {
    if (b.empty()) throw std::invalid_argument("sequential_protocol: empty block");
    for (int j : b) {
      if (j < 0 || j >= N) throw std::invalid_argument("sequential_protocol: atom index out of range");
      ++seen[j];
    }
  }
  for (int c : seen)
    if (c != 1) throw std::invalid_argument("sequential_protocol: blocks must partition the atoms");

  std::vector<BlockRun> runs;
  for (const auto& block : blocks) {
    EmitterArray ab = a;
    if (ab.detuning_offsets.size() != N) ab.detuning_offsets = RVec::Zero(N);
    const std::set<int> in(block.begin(), block.end());
    for (int j = 0; j < N; ++j)
      if (!in.count(j)) ab.detuning_offsets(j) -= opt.block_detuning;

    BlockRun run;
    run.atoms = block;
    CoolingOptions co;
    co.observed = block;
    co.samples = opt.samples;
    co.horizon = opt.horizon;
    if (co.horizon <= 0.0) co.rate_guess = block_rate_guess(ab, drive, block);
    if (opt.horizon > 0.0) co.horizon_refinements = 0;
    const FullModel model = build_liouvillian(ab, drive, tr);
    std::vector<int> others;
    for (int j = 0; j < N; ++j)
      if (!in.count(j)) others.push_back(j);
    run.n_ss_conditional = conditional_occupation(model, steady_state(model), block, others);
    run.curve = cooling_curve(model, co);
    run.drift = RVec::Constant(N, kNaN);
    const auto& P = run.curve.phonons;
    for (int j = 0; j < N; ++j) {
      if (in.count(j)) continue;
      const double n0 = P(0, j), n1 = P(P.rows() - 1, j);
      run.drift(j) = n0 > 0.0 ? std::abs(n1 - n0) / n0 : std::abs(n1 - n0);
      run.max_drift = std::max(run.max_drift, run.drift(j));
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

Percentiles percentiles(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  Percentiles p;
  if (v.empty()) return p;
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * (v.size() - 1);
    const auto k = static_cast<size_t>(std::floor(pos));
    if (k + 1 >= v.size()) return v.back();
    return v[k] + (pos - k) * (v[k + 1] - v[k]);
  };
  p.p25 = at(0.25);
  p.median = at(0.5);
  p.p75 = at(0.75);
  return p;
}

Pipeline parse_pipeline(const std::string& s) {
  if (s == "effective") return Pipeline::Effective;
  if (s == "full") return Pipeline::Full;
  throw std::invalid_argument("unknown pipeline '" + s + "'");
}

SweepResult ensemble_sweep(const GeometrySpec& g, const TrapProfile& profile, double eta, double rabi,
                           const EnsembleOptions& opt) {
  if (opt.realizations < 1) throw std::invalid_argument("ensemble_sweep: need at least one realization");
  SweepResult res;
  res.points.resize(opt.realizations);
  parallel_for(opt.realizations, opt.threads, [&](int r) {
    EnsemblePoint& p = res.points[r];
    p.realization = r;
    try {
      const EmitterArray a = make_array(g, profile, eta, r);
      DriveField drive;
      drive.rabi = rabi;
      drive.direction = g.motion_axis;
      const auto mc = select_cooling_mode(a, drive);
      drive.detuning = mc.detuning;
      p.mode = mc.mode;
      p.detuning = mc.detuning;
      if (opt.pipeline == Pipeline::Effective) {
        const auto e = solve_effective(a, drive);
        p.nbar = e.nbar;
        p.rate = -2.0 * stability_margin(e.rates);
      } else {
        const auto m = build_liouvillian(a, drive, opt.truncation);
        CoolingOptions co;
        co.rate_guess = effective_rate_guess(a, drive);
        const auto c = cooling_curve(m, co);
        p.nbar = c.nbar_ss;
        p.rate = c.fit.rate;
        if (!c.reliable) p.message = c.warnings.front();
      }
      p.ok = std::isfinite(p.nbar);
    } catch (const std::exception& e) {
      p.ok = false;
      p.message = e.what();
    }
  });
  std::vector<double> n, r;
  for (const auto& p : res.points) {
    n.push_back(p.ok ? p.nbar : kNaN);
    r.push_back(p.ok ? p.rate : kNaN);
  }
  res.nbar = percentiles(n);
  res.rate = percentiles(r);
  res.n_ind = independent_occupation(make_array(g, profile, eta, 0), rabi);
  return res;
}

RingTargetResult ring_target_cooling(int ring_atoms, double radius, double delta_tS, const RingTargetOptions& opt) {
  if (ring_atoms < 2) throw std::invalid_argument("ring_target_cooling: need at least 2 ring atoms");
  if (!(radius > 0.0)) throw std::invalid_argument("ring_target_cooling: radius must be positive");
  GeometrySpec gs;
  gs.kind = GeometryKind::RingPlusCenter;
  gs.atoms = ring_atoms;
  gs.radius = radius;
  gs.polarization = opt.polarization;
  EmitterArray a = build_geometry(gs);
  const int t = ring_atoms;
  a.trap_frequencies = RVec::Constant(a.size(), opt.nu_t);
  RVec eta = RVec::Zero(a.size());
  eta(t) = opt.eta_t;

  RingTargetResult res;
  res.params = ring_target_parameters(a, t, eta);
  res.dark_detuning = dark_detuning(res.params);
  res.delta_tS = delta_tS;

  const auto modes0 = collective_modes(ring_target_hamiltonian(res.params, 0.0, delta_tS), 0.0);
  const int dark = modes0.linewidth(0) <= modes0.linewidth(1) ? 0 : 1;
  res.gamma_d = modes0.linewidth(dark);
  res.detuning = sideband_detuning(modes0.shift(dark), res.gamma_d, opt.nu_t);

  const CMat H = ring_target_hamiltonian(res.params, res.detuning, delta_tS);
  const auto sp = collective_modes(H, res.detuning);
  // drive along the motion axis reaches the whole plane with one phase
  CVec src(2);
  src << -opt.rabi, -std::sqrt(double(ring_atoms)) * opt.rabi;
  const CVec s = solve_linear(H, src);
  const double pre = opt.eta_t * opt.eta_t * opt.rabi * opt.rabi;  // |dOmega_t|^2 = Omega^2
  cplx sm = 0, spl = 0;
  for (int l = 0; l < 2; ++l) {
    const cplx c = sp.overlap(l, 0, 0);
    sm += c / (sp.eps(l) - opt.nu_t) - std::conj(c) / (std::conj(sp.eps(l)) - opt.nu_t);
    spl += c / (sp.eps(l) + opt.nu_t) - std::conj(c) / (std::conj(sp.eps(l)) + opt.nu_t);
  }
  const double gpp = self_curvature(a, t);
  const double recoil = -opt.eta_t * opt.eta_t * gpp * std::norm(s(0));
  res.Rm = (-I1 * pre * sm).real() + recoil;
  res.Rp = (-I1 * pre * spl).real() + recoil;
  res.rate = res.Rm - res.Rp;
  if (!(res.rate > 0.0)) throw HeatingError("ring_target_cooling: target heats at this detuning");
  res.n_ss = res.Rp / res.rate;
  res.n_isolated = n_independent(opt.nu_t, independent_optimal_detuning(opt.nu_t), opt.rabi, opt.eta_t, true, gpp).nbar;
  const double T = opt.horizon > 0.0 ? opt.horizon : 6.0 / res.rate;
  res.times = linspace(0.0, T, opt.samples);
  for (double tt : res.times) res.n_t.push_back(res.n_ss + (opt.n0 - res.n_ss) * std::exp(-res.rate * tt));
  return res;
}

RingTargetResult ring_target_cooling_dark(int ring_atoms, double radius, const RingTargetOptions& opt) {
  GeometrySpec gs;
  gs.kind = GeometryKind::RingPlusCenter;
  gs.atoms = ring_atoms;
  gs.radius = radius;
  gs.polarization = opt.polarization;
  EmitterArray a = build_geometry(gs);
  RVec eta = RVec::Zero(a.size());
  eta(ring_atoms) = opt.eta_t;
  const double dark = dark_detuning(ring_target_parameters(a, ring_atoms, eta));
  return ring_target_cooling(ring_atoms, radius, dark, opt);
}

std::vector<RegimePoint> regime_map(double d, const std::string& pol, double nu_bar, double eta,
                                    const std::vector<double>& delta_nu, const std::vector<double>& rabi,
                                    int threads) {
  const int nd = static_cast<int>(delta_nu.size()), nr = static_cast<int>(rabi.size());
  std::vector<RegimePoint> out(static_cast<size_t>(nd) * nr);
  const double gamma_A = two_atom_predictions(d, parse_polarization(pol), eta, nu_bar).gamma_A;
  GeometrySpec g;
  g.atoms = 2;
  g.spacing = d;
  g.polarization = pol;
  parallel_for(nd * nr, threads, [&](int k) {
    RegimePoint& p = out[k];
    p.delta_nu = delta_nu[k / nr];
    p.rabi = rabi[k % nr];
    try {
      TrapProfile t;
      t.kind = TrapProfile::Kind::Gradient;
      t.nu_bar = nu_bar;
      t.delta_nu = p.delta_nu;
      const EmitterArray a = make_array(g, t, eta);
      DriveField drive;
      drive.rabi = p.rabi;
      drive.direction = g.motion_axis;
      drive.detuning = two_atom_detuning(a);
      p.regime = classify_regime(p.delta_nu, p.rabi, eta, gamma_A);
      p.n_ind = n_independent(nu_bar, independent_optimal_detuning(nu_bar), p.rabi, eta, true, self_curvature(a, 0)).nbar;
      p.nbar = solve_effective(a, drive).nbar;
      p.ratio = p.nbar / p.n_ind;
      p.ok = true;
    } catch (const std::exception& e) {
      p.ok = false;
      p.message = e.what();
    }
  });
  return out;
}

}  // namespace subradcool
