#include "subradcool/baselines.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace subradcool {

IndependentRates n_independent(double nu, double detuning, double rabi, double eta, bool with_recoil,
                               double self_curvature) {
  if (rabi == 0.0) throw std::invalid_argument("n_independent: zero drive, steady state undefined");
  const double w2 = eta * eta * rabi * rabi;
  const double carrier = with_recoil ? w2 * std::abs(self_curvature) / (detuning * detuning + 0.25) : 0.0;
  IndependentRates r;
  r.Rm = w2 / ((-detuning - nu) * (-detuning - nu) + 0.25) + carrier;
  r.Rp = w2 / ((-detuning + nu) * (-detuning + nu) + 0.25) + carrier;
  r.rate = r.Rm - r.Rp;
  if (r.rate == 0.0) throw std::invalid_argument("n_independent: cooling and heating rates coincide");
  r.heating = r.rate < 0.0;
  r.nbar = r.heating ? std::numeric_limits<double>::infinity() : r.Rp / r.rate;
  return r;
}

double independent_optimal_detuning(double nu) { return -std::sqrt(nu * nu + 0.25); }

double n_independent_resolved(double nu) { return 13.0 / (80.0 * nu * nu); }
double n_independent_doppler(double nu) { return 7.0 / (20.0 * nu); }

TwoAtomPrediction two_atom_predictions(double d, const Polarization& p, double eta, double nu_bar) {
  if (!(d > 0.0)) throw std::invalid_argument("two_atom_predictions: d must be positive");
  const Vec3<double> r1(0, 0, 0), r2(d, 0, 0), z(0, 0, 1);
  TwoAtomPrediction t;
  const auto g = coupling(r1, r2, p);
  const cplx g2 = coupling_second_derivative(r1, r2, p, z, z);
  const cplx g0 = coupling_second_derivative(r1, r1, p, z, z);
  t.J12 = g.J();
  t.gamma12 = g.gamma();
  t.J12pp = g2.real();
  t.gamma12pp = -2.0 * g2.imag();
  const double gamma0pp = -2.0 * g0.imag();
  const double e2 = eta * eta;
  t.gamma_S = 1.0 + t.gamma12 + e2 * t.gamma12pp;
  t.gamma_A = 1.0 - t.gamma12 - e2 * t.gamma12pp;
  t.J_S = t.J12 + e2 * t.J12pp;
  t.J_A = -t.J12 - e2 * t.J12pp;
  t.gammapp_S = gamma0pp + t.gamma12pp;
  t.gammapp_A = gamma0pp - t.gamma12pp;
  const double nu2 = nu_bar * nu_bar;
  t.n_A = t.gamma_A * t.gamma_A / (16 * nu2) * (1 + 4 * std::abs(t.gammapp_A) / t.gamma_A);
  t.n_S = (t.gamma_S * t.gamma_S + 16 * t.J12 * t.J12) / (16 * nu2) * (1 + 4 * std::abs(t.gammapp_S) / t.gamma_S);
  t.n_ind_resolved = n_independent_resolved(nu_bar);
  t.n_ind_doppler = n_independent_doppler(nu_bar);
  t.ratio_resolved = 2.0 * t.gamma_A;
  t.ratio_strong_shift = 5.0 / 13.0 * t.gamma_A * t.gamma_A;
  t.ratio_subradiant = 5.0 / 28.0 * t.gamma_A * t.gamma_A / nu_bar;
  t.ratio_unresolved = 5.0 / 7.0 * t.gamma_A;
  t.optimal_detuning = -std::sqrt(nu2 + 0.25 * t.gamma_A * t.gamma_A) - t.J12;
  return t;
}

double subradiant_floor(double d, double eta) {
  const double kd = to_phase(d);
  return 0.2 * (kd * kd + 2.0 * eta * eta);
}

double array_cooling_rate(double eta, double rabi, double gamma_A) {
  return 2.0 * eta * eta * rabi * rabi / gamma_A;
}

double optimal_detuning(double shift, double linewidth, double nu_bar) {
  return -std::sqrt(nu_bar * nu_bar + 0.25 * linewidth * linewidth) + shift;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::SingleMode: return "single_mode";
    case Regime::ArrayCooling: return "array_cooling";
    default: return "single_atom";
  }
}

RegimeClassification classify_regime(double delta_nu, double rabi, double eta, double gamma_A) {
  if (!(delta_nu >= 0.0) || !(rabi >= 0.0) || !(eta >= 0.0) || !(gamma_A > 0.0))
    throw std::invalid_argument("classify_regime: inputs must be positive");
  RegimeClassification c;
  c.lower = 2.0 * eta * eta * rabi * rabi / gamma_A;
  c.upper = 0.5 * gamma_A;
  if (delta_nu > c.upper)
    c.label = Regime::SingleAtom;
  else if (delta_nu < c.lower)
    c.label = Regime::SingleMode;
  else
    c.label = Regime::ArrayCooling;
  return c;
}

RateEstimate n_atom_rate_estimate(const CollectiveSpectrum& sp, int j, double nu_j, double eta_j, double rabi,
                                  cplx s_j, double self_curvature) {
  const int n = sp.size();
  if (j < 0 || j >= n) throw std::invalid_argument("n_atom_rate_estimate: atom index out of range");
  RateEstimate e;
  const double w2 = eta_j * eta_j * rabi * rabi;
  for (int l = 0; l < n; ++l) {
    const double re = sp.eps(l).real();
    const double g = sp.linewidth(l);
    e.Rm += w2 * g / ((re - nu_j) * (re - nu_j) + 0.25 * g * g);
    e.Rp += w2 * g / ((re + nu_j) * (re + nu_j) + 0.25 * g * g);
    const double w = std::norm(sp.phi(j, l)) * n;
    if (w > 3.0 || w < 1.0 / 3.0) {
      std::ostringstream msg;
      msg << "mode " << l << " is not delocalized on atom " << j << " (N|phi|^2 = " << w << ")";
      e.warnings.push_back(msg.str());
    }
  }
  e.Rm /= n;
  e.Rp /= n;
  const double recoil = eta_j * eta_j * std::abs(self_curvature) * std::norm(s_j);
  e.Rm += recoil;
  e.Rp += recoil;
  return e;
}

}  // namespace subradcool
