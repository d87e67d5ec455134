#pragma once

#include <string>
#include <utility>
#include <vector>

#include "subradcool/numerics.hpp"
#include "subradcool/spin_system.hpp"

namespace subradcool {

// Coefficients of the effective motional master equation. Mode k stands for
// (atom, axis) = modes[k]; single-axis models have one mode per atom.
struct MotionRates {
  CMat V;   // coherent couplings (Hermitian)
  CMat Rm;  // cooling
  CMat Rp;  // heating
  RVec nu;  // trap frequency of each mode
  std::vector<std::pair<int, int>> modes;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(nu.size()); }
  double hermiticity_error() const;
};

// Precomputed inputs shared by the rate builders.
struct SpinContext {
  EmitterArray array;
  DriveField drive;
  CouplingTables tables;
  SteadySpinState steady;
  CollectiveSpectrum spectrum;
};

SpinContext make_spin_context(const EmitterArray& a, const DriveField& drive,
                              Convention conv = Convention::MainText);

// Rates for motion with no first-order dipole force (G' = 0 along `axis`).
// Throws std::invalid_argument if some |G'| exceeds 1e-12.
MotionRates rates_perpendicular(const SpinContext& ctx, int axis = 0);
// Single-axis rates including dipole-induced spin-motion coupling.
MotionRates rates_general(const SpinContext& ctx, int axis = 0);
// All declared axes, modes ordered atom-major.
MotionRates rates_multi_axis(const SpinContext& ctx);

// M_ij = <b_i^dag b_j> in the lab frame.
struct SecondMoments {
  double t = 0.0;
  CMat M;

  RVec populations() const { return M.diagonal().real(); }
  double mean_population() const { return populations().mean(); }
};

class HeatingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// dM/dt = P M + M P^dag + R+, with P = i(V + diag nu)^T - Rm^T/2 + Rp/2.
CMat moment_drift(const MotionRates& r);

std::vector<SecondMoments> evolve_moments(const MotionRates& r, const CMat& M0, const std::vector<double>& times,
                                          double divergence_bound = 1e6, const OdeOptions& opt = {});
// Closed-form propagation through the matrix exponential of the drift; suited
// to horizons far longer than the trap-frequency beat periods.
std::vector<SecondMoments> propagate_moments(const MotionRates& r, const CMat& M0, const std::vector<double>& times);
// Throws HeatingError when the drift has an eigenvalue with Re >= 0.
SecondMoments steady_state_moments(const MotionRates& r);
double stability_margin(const MotionRates& r);  // max Re eig(P)

enum class RateModel { Auto, Perpendicular, General, MultiAxis };
RateModel parse_rate_model(const std::string& s);

struct EffectiveResult {
  SpinContext ctx;
  MotionRates rates;
  SecondMoments steady;
  double nbar = 0.0;
  std::vector<std::string> warnings;
};

// Auto picks perpendicular when all G' vanish, general otherwise; multi-axis
// when more than one axis is declared.
EffectiveResult solve_effective(const EmitterArray& a, const DriveField& drive,
                                RateModel model = RateModel::Auto, Convention conv = Convention::MainText);

// Red-sideband detuning of mode l at trap frequency nu.
double sideband_detuning(double shift, double linewidth, double nu);

struct ModeChoice {
  int mode = -1;
  double detuning = 0.0;
  double nbar = 0.0;
  std::vector<double> candidate_nbar;  // per mode, NaN when unstable
};

// Drives the red sideband of each collective mode in turn and keeps the
// detuning with the lowest steady-state phonon number.
ModeChoice select_cooling_mode(const EmitterArray& a, const DriveField& drive_template,
                               RateModel model = RateModel::Auto, Convention conv = Convention::MainText);

}  // namespace subradcool
