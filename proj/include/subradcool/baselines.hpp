#pragma once

#include <string>
#include <vector>

#include "subradcool/green.hpp"
#include "subradcool/spin_system.hpp"

namespace subradcool {

// Self-diffusion curvature for motion perpendicular to the dipole.
inline constexpr double kSelfCurvaturePerp = -0.4;

struct IndependentRates {
  double Rm = 0.0, Rp = 0.0;
  double nbar = 0.0;  // Rp / (Rm - Rp); infinite when heating
  double rate = 0.0;  // Rm - Rp
  bool heating = false;
};

// Sideband cooling of one trapped atom driven by a plane wave (|Omega'| = |Omega|).
IndependentRates n_independent(double nu, double detuning, double rabi, double eta, bool with_recoil = true,
                               double self_curvature = kSelfCurvaturePerp);
double independent_optimal_detuning(double nu);
// Resolved (nu >> 1) and Doppler (nu << 1) limits of the optimum.
double n_independent_resolved(double nu);
double n_independent_doppler(double nu);

struct TwoAtomPrediction {
  double J12 = 0, gamma12 = 0, J12pp = 0, gamma12pp = 0;
  double gamma_S = 0, gamma_A = 0;
  double J_S = 0, J_A = 0;  // collective shifts (relative to the bare transition)
  double gammapp_S = 0, gammapp_A = 0;
  double n_A = 0, n_S = 0;  // single-mode cooling occupations (resolved sidebands)
  double n_ind_resolved = 0, n_ind_doppler = 0;
  double ratio_resolved = 0;     // nbar / n_ind, nu >> |J12|
  double ratio_strong_shift = 0; // nbar / n_ind, |J12| >> nu
  double ratio_subradiant = 0;   // nbar / n_ind(Doppler), gamma_A << nu <~ 1
  double ratio_unresolved = 0;   // nbar / n_ind(Doppler), nu << gamma_A / 2
  double optimal_detuning = 0;   // antisymmetric red sideband at nu
};

// Two atoms separated by d (in lambda_0) along x, moving along z.
TwoAtomPrediction two_atom_predictions(double d, const Polarization& p, double eta, double nu_bar);
// gamma_A from the small-separation expansion.
double subradiant_floor(double d, double eta);
// Cooling rate in the array-cooling regime (each atom sees half the
// antisymmetric sideband rate).
double array_cooling_rate(double eta, double rabi, double gamma_A);

// Red-sideband detuning of a mode with shift J and width gamma.
double optimal_detuning(double shift, double linewidth, double nu_bar);

enum class Regime { SingleMode, ArrayCooling, SingleAtom };
std::string to_string(Regime r);

struct RegimeClassification {
  Regime label = Regime::ArrayCooling;
  double lower = 0.0;  // 2 eta^2 Omega^2 / gamma_A
  double upper = 0.0;  // gamma_A / 2
};
RegimeClassification classify_regime(double delta_nu, double rabi, double eta, double gamma_A);

struct RateEstimate {
  double Rm = 0.0, Rp = 0.0;
  std::vector<std::string> warnings;
};

// Mode-averaged rates for atom j assuming delocalized collective modes. s_j is
// the steady excited-state amplitude used for the recoil term.
RateEstimate n_atom_rate_estimate(const CollectiveSpectrum& spectrum, int j, double nu_j, double eta_j, double rabi,
                                  cplx s_j, double self_curvature = kSelfCurvaturePerp);

}  // namespace subradcool
