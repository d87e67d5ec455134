#include "subradcool/motion.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace subradcool {

double MotionRates::hermiticity_error() const {
  return std::max({(V - V.adjoint()).cwiseAbs().maxCoeff(), (Rm - Rm.adjoint()).cwiseAbs().maxCoeff(),
                   (Rp - Rp.adjoint()).cwiseAbs().maxCoeff()});
}

SpinContext make_spin_context(const EmitterArray& a, const DriveField& drive, Convention conv) {
  a.validate();
  SpinContext ctx{a, drive, coupling_tables(a), {}, {}};
  ctx.steady = steady_displacements(a, drive, ctx.tables);
  const CMat H = spin_hamiltonian(ctx.tables, a.lamb_dicke(), a.detuning_offsets, drive.detuning, conv, &ctx.steady);
  ctx.spectrum = collective_modes(H, drive.detuning);
  return ctx;
}

namespace {

void check_rates(MotionRates& r) {
  const double scale = std::max(r.Rm.cwiseAbs().maxCoeff(), r.Rp.cwiseAbs().maxCoeff());
  for (int k = 0; k < r.size(); ++k) {
    if (r.Rm(k, k).real() < -1e-12 * scale || r.Rp(k, k).real() < -1e-12 * scale) {
      std::ostringstream msg;
      msg << "negative diagonal transition rate on mode " << k << " (perturbative breakdown)";
      r.warnings.push_back(msg.str());
    }
  }
  // symmetrize away rounding; the construction is Hermitian analytically
  r.V = 0.5 * (r.V + r.V.adjoint()).eval();
  r.Rm = 0.5 * (r.Rm + r.Rm.adjoint()).eval();
  r.Rp = 0.5 * (r.Rp + r.Rp.adjoint()).eval();
}

// Drive- and recoil-only local terms of V shared by all rate builders.
cplx local_coherent(const SpinContext& c, int i, int j, int a, int b, double eta_ia, double eta_jb) {
  const CVec& s = c.steady.s;
  if (i == j) {
    cplx acc = 0;
    for (int m = 0; m < s.size(); ++m)
      if (m != i) acc += (2.0 * c.tables.d2[a][b](i, m) * std::conj(s(i)) * s(m)).real();
    const cplx omega2 = c.drive.rabi_curvature(c.array, c.array.motion_axes[a], c.array.motion_axes[b])(i);
    acc += 2.0 * (omega2 * std::conj(s(i))).real();
    return eta_ia * eta_jb * acc;
  }
  return -2.0 * eta_ia * eta_jb * c.tables.d2[a][b](i, j).real() * (std::conj(s(i)) * s(j)).real();
}

double recoil_gamma(const SpinContext& c, int i, int j, int a, int b) { return -2.0 * c.tables.d2[a][b](i, j).imag(); }

MotionRates rates_core(const SpinContext& c, const std::vector<int>& axes) {
  const int n = c.array.size();
  const int L = c.spectrum.size();
  const RMat eta = c.array.lamb_dicke();
  const CVec& s = c.steady.s;
  const CMat& phi = c.spectrum.phi;
  const CMat& cw = c.spectrum.c;

  MotionRates r;
  for (int i = 0; i < n; ++i)
    for (int a : axes) r.modes.emplace_back(i, a);
  const int K = static_cast<int>(r.modes.size());
  r.nu.resize(K);
  RVec etak(K);
  for (int k = 0; k < K; ++k) {
    r.nu(k) = c.array.trap_frequencies(r.modes[k].first, r.modes[k].second);
    etak(k) = eta(r.modes[k].first, r.modes[k].second);
  }

  CMat A(L, K), B(L, K);
  for (int k = 0; k < K; ++k) {
    const int i = r.modes[k].first, a = r.modes[k].second;
    const cplx dOm = c.drive.rabi_gradient(c.array, c.array.motion_axes[a])(i);
    const CMat& g1 = c.tables.d1[a];
    for (int l = 0; l < L; ++l) {
      cplx av = -I1 * dOm * cw(i, l);
      cplx bv = -I1 * dOm * std::conj(phi(i, l));
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double Jp = g1(i, j).real(), gp = -2.0 * g1(i, j).imag();
        av += -I1 * g1(i, j) * (cw(i, l) * s(j) + cw(j, l) * s(i));
        bv += -I1 * Jp * (std::conj(phi(i, l)) * s(j) + std::conj(phi(j, l)) * s(i));
        bv += -0.5 * gp * (std::conj(phi(i, l)) * s(j) - std::conj(phi(j, l)) * s(i));
      }
      A(l, k) = av;
      B(l, k) = bv;
    }
  }

  auto E = [&](int l, int k, double sgn) { return -I1 / (c.spectrum.eps(l) + sgn * r.nu(k)); };

  r.Rm.resize(K, K);
  r.Rp.resize(K, K);
  CMat Dm(K, K), Dp(K, K);
  for (int k = 0; k < K; ++k) {
    for (int q = 0; q < K; ++q) {
      cplx rm = 0, rp = 0, dm = 0, dp = 0;
      for (int l = 0; l < L; ++l) {
        const cplx x = A(l, q) * std::conj(B(l, k));
        const cplx y = std::conj(A(l, k)) * B(l, q);
        const cplx xm = x * E(l, q, -1.0), ym = y * std::conj(E(l, k, -1.0));
        const cplx xp = x * E(l, q, +1.0), yp = y * std::conj(E(l, k, +1.0));
        rm += xm + ym;
        rp += xp + yp;
        dm += -I1 * xm + I1 * ym;
        dp += -I1 * xp + I1 * yp;
      }
      const int i = r.modes[k].first, a = r.modes[k].second;
      const int j = r.modes[q].first, b = r.modes[q].second;
      const double ee = etak(k) * etak(q);
      const cplx recoil = -ee * recoil_gamma(c, i, j, a, b) * s(j) * std::conj(s(i));
      r.Rm(k, q) = ee * rm + recoil;
      r.Rp(k, q) = ee * rp + recoil;
      Dm(k, q) = 0.5 * ee * dm;
      Dp(k, q) = 0.5 * ee * dp;
    }
  }
  r.V.resize(K, K);
  for (int k = 0; k < K; ++k)
    for (int q = 0; q < K; ++q) {
      const int i = r.modes[k].first, a = r.modes[k].second;
      const int j = r.modes[q].first, b = r.modes[q].second;
      r.V(k, q) = Dm(k, q) + Dp(q, k) + local_coherent(c, i, j, a, b, etak(k), etak(q));
    }
  check_rates(r);
  return r;
}

void check_axis(const SpinContext& c, int axis) {
  if (axis < 0 || axis >= c.array.axes()) throw std::invalid_argument("rates: motion axis index out of range");
}

}  // namespace

MotionRates rates_perpendicular(const SpinContext& c, int axis) {
  check_axis(c, axis);
  const double gmax = c.tables.d1[axis].cwiseAbs().maxCoeff();
  if (gmax > 1e-12)
    throw std::invalid_argument("rates_perpendicular: nonzero dipole force along the motion axis; use rates_general");
  const int n = c.array.size();
  const int L = c.spectrum.size();
  const RMat eta = c.array.lamb_dicke();
  const CVec& s = c.steady.s;
  const CVec dOm = c.drive.rabi_gradient(c.array, c.array.motion_axes[axis]);
  const CVec& eps = c.spectrum.eps;

  MotionRates r;
  r.nu = c.array.trap_frequencies.col(axis);
  for (int i = 0; i < n; ++i) r.modes.emplace_back(i, axis);
  r.Rm.resize(n, n);
  r.Rp.resize(n, n);
  CMat Dm(n, n), Dp(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double ee = eta(i, axis) * eta(j, axis);
      const cplx pre = ee * dOm(j) * std::conj(dOm(i));
      cplx sm = 0, sp = 0, dm = 0, dp = 0;
      for (int l = 0; l < L; ++l) {
        const cplx cij = c.spectrum.overlap(l, i, j);
        sm += cij / (eps(l) - r.nu(j)) - std::conj(cij) / (std::conj(eps(l)) - r.nu(i));
        sp += cij / (eps(l) + r.nu(j)) - std::conj(cij) / (std::conj(eps(l)) + r.nu(i));
        dm += cij / (eps(l) - r.nu(j)) + std::conj(cij) / (std::conj(eps(l)) - r.nu(i));
        dp += cij / (eps(l) + r.nu(j)) + std::conj(cij) / (std::conj(eps(l)) + r.nu(i));
      }
      const cplx recoil = -ee * recoil_gamma(c, i, j, axis, axis) * s(j) * std::conj(s(i));
      r.Rm(i, j) = -I1 * pre * sm + recoil;
      r.Rp(i, j) = -I1 * pre * sp + recoil;
      Dm(i, j) = -0.5 * pre * dm;
      Dp(i, j) = -0.5 * pre * dp;
    }
  }
  r.V.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      r.V(i, j) = Dm(i, j) + Dp(j, i) + local_coherent(c, i, j, axis, axis, eta(i, axis), eta(j, axis));
  check_rates(r);
  return r;
}

MotionRates rates_general(const SpinContext& c, int axis) {
  check_axis(c, axis);
  return rates_core(c, {axis});
}

MotionRates rates_multi_axis(const SpinContext& c) {
  std::vector<int> axes(c.array.axes());
  for (int a = 0; a < c.array.axes(); ++a) axes[a] = a;
  return rates_core(c, axes);
}

CMat moment_drift(const MotionRates& r) {
  CMat Vp = r.V;
  Vp.diagonal() += r.nu.cast<cplx>();
  return I1 * Vp.transpose() - 0.5 * r.Rm.transpose() + 0.5 * r.Rp;
}

namespace {

// Solves P X + X P^dag = C by Bartels-Stewart on the complex Schur form.
CMat solve_lyapunov(const CMat& P, const CMat& C) {
  Eigen::ComplexSchur<CMat> schur(P);
  if (schur.info() != Eigen::Success) throw NumericalError("steady_state_moments: Schur decomposition failed");
  const CMat& T = schur.matrixT();
  const CMat& U = schur.matrixU();
  const CMat F = U.adjoint() * C * U;
  const int K = static_cast<int>(P.rows());
  CMat X = CMat::Zero(K, K);
  const double scale = T.cwiseAbs().maxCoeff();
  for (int i = K - 1; i >= 0; --i) {
    for (int j = K - 1; j >= 0; --j) {
      cplx rhs = F(i, j);
      for (int k = i + 1; k < K; ++k) rhs -= T(i, k) * X(k, j);
      for (int k = j + 1; k < K; ++k) rhs -= X(i, k) * std::conj(T(j, k));
      const cplx d = T(i, i) + std::conj(T(j, j));
      if (std::abs(d) <= 1e-15 * std::max(scale, 1e-300)) throw NumericalError("moment equations are singular");
      X(i, j) = rhs / d;
    }
  }
  return U * X * U.adjoint();
}

}  // namespace

double stability_margin(const MotionRates& r) {
  const CMat P = moment_drift(r);
  Eigen::ComplexEigenSolver<CMat> es(P, false);
  return es.eigenvalues().real().maxCoeff();
}

SecondMoments steady_state_moments(const MotionRates& r) {
  const double margin = stability_margin(r);
  if (!(margin < 0.0)) {
    std::ostringstream msg;
    msg << "no steady state: net heating (max Re eig = " << margin << ")";
    throw HeatingError(msg.str());
  }
  SecondMoments out;
  out.t = std::numeric_limits<double>::infinity();
  const CMat M = solve_lyapunov(moment_drift(r), -r.Rp);
  out.M = 0.5 * (M + M.adjoint());
  return out;
}

std::vector<SecondMoments> evolve_moments(const MotionRates& r, const CMat& M0, const std::vector<double>& times,
                                          double divergence_bound, const OdeOptions& opt) {
  const int K = r.size();
  if (M0.rows() != K || M0.cols() != K) throw std::invalid_argument("evolve_moments: M0 shape mismatch");
  if ((M0 - M0.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("evolve_moments: M0 must be Hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> psd(0.5 * (M0 + M0.adjoint()), Eigen::EigenvaluesOnly);
  if (psd.eigenvalues().minCoeff() < -1e-8) throw std::invalid_argument("evolve_moments: M0 must be PSD");

  const CMat P = moment_drift(r);
  const CMat Q = P.adjoint();
  const CMat Rp = r.Rp;
  LinearRhs rhs = [&](double, const CVec& y, CVec& dy) {
    Eigen::Map<const CMat> M(y.data(), K, K);
    const CMat D = P * M + M * Q + Rp;
    dy = Eigen::Map<const CVec>(D.data(), K * K);
  };
  const CVec y0 = Eigen::Map<const CVec>(M0.data(), K * K);
  const auto ys = integrate_linear_ode(rhs, y0, times, opt);
  std::vector<SecondMoments> out;
  out.reserve(ys.size());
  for (std::size_t s = 0; s < ys.size(); ++s) {
    SecondMoments m;
    m.t = times[s];
    const CMat M = Eigen::Map<const CMat>(ys[s].data(), K, K);
    m.M = 0.5 * (M + M.adjoint());
    if (m.populations().maxCoeff() > divergence_bound) {
      std::ostringstream msg;
      msg << "phonon number exceeded " << divergence_bound << " at t = " << m.t << " (heating regime)";
      throw HeatingError(msg.str());
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<SecondMoments> propagate_moments(const MotionRates& r, const CMat& M0, const std::vector<double>& times) {
  const int K = r.size();
  if (M0.rows() != K || M0.cols() != K) throw std::invalid_argument("propagate_moments: M0 shape mismatch");
  const CMat P = moment_drift(r);
  // M(t) = e^{Pt} (M0 - Mss) e^{P^dag t} + Mss, with Mss the particular solution
  const CMat Mss = solve_lyapunov(P, -r.Rp);
  const CMat D0 = M0 - Mss;
  std::vector<SecondMoments> out;
  for (double t : times) {
    const CMat U = (P * t).exp();
    SecondMoments m;
    m.t = t;
    const CMat M = U * D0 * U.adjoint() + Mss;
    m.M = 0.5 * (M + M.adjoint());
    out.push_back(std::move(m));
  }
  return out;
}

RateModel parse_rate_model(const std::string& s) {
  if (s == "auto") return RateModel::Auto;
  if (s == "perpendicular") return RateModel::Perpendicular;
  if (s == "general") return RateModel::General;
  if (s == "multi-axis" || s == "multi_axis") return RateModel::MultiAxis;
  throw std::invalid_argument("unknown rate model '" + s + "'");
}

EffectiveResult solve_effective(const EmitterArray& a, const DriveField& drive, RateModel model, Convention conv) {
  EffectiveResult res;
  res.ctx = make_spin_context(a, drive, conv);
  if (model == RateModel::Auto) {
    if (a.axes() > 1)
      model = RateModel::MultiAxis;
    else
      model = res.ctx.tables.d1[0].cwiseAbs().maxCoeff() <= 1e-12 ? RateModel::Perpendicular : RateModel::General;
  }
  switch (model) {
    case RateModel::Perpendicular: res.rates = rates_perpendicular(res.ctx, 0); break;
    case RateModel::General: res.rates = rates_general(res.ctx, 0); break;
    default: res.rates = rates_multi_axis(res.ctx); break;
  }
  res.steady = steady_state_moments(res.rates);
  res.nbar = res.steady.mean_population();
  res.warnings = res.ctx.steady.warnings;
  res.warnings.insert(res.warnings.end(), res.rates.warnings.begin(), res.rates.warnings.end());
  return res;
}

double sideband_detuning(double shift, double linewidth, double nu) {
  return -std::sqrt(nu * nu + 0.25 * linewidth * linewidth) + shift;
}

ModeChoice select_cooling_mode(const EmitterArray& a, const DriveField& drive_template, RateModel model,
                               Convention conv) {
  a.validate();
  const auto g = coupling_tables(a);
  const CMat H0 = spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, 0.0, Convention::MainText);
  const auto modes = collective_modes(H0, 0.0);
  const double nu_bar = a.mean_trap_frequency();
  ModeChoice best;
  best.nbar = std::numeric_limits<double>::infinity();
  for (int l = 0; l < modes.size(); ++l) {
    DriveField d = drive_template;
    d.detuning = sideband_detuning(modes.shift(l), modes.linewidth(l), nu_bar);
    double nb = std::numeric_limits<double>::quiet_NaN();
    try {
      nb = solve_effective(a, d, model, conv).nbar;
    } catch (const NumericalError&) {
    }
    best.candidate_nbar.push_back(nb);
    if (std::isfinite(nb) && nb >= 0.0 && nb < best.nbar) {
      best.nbar = nb;
      best.mode = l;
      best.detuning = d.detuning;
    }
  }
  if (best.mode < 0) throw HeatingError("select_cooling_mode: no collective mode yields a steady state");
  return best;
}

}  // namespace subradcool
