#pragma once

#include <string>
#include <vector>

#include "subradcool/green.hpp"
#include "subradcool/numerics.hpp"

namespace subradcool {

using Vec3d = Vec3<double>;

// Trapped emitters. Lengths in lambda_0, rates and frequencies in gamma_0.
struct EmitterArray {
  std::vector<Vec3d> positions;
  Polarization polarization = polarization::y();
  // Cartesian motion axes shared by all atoms; the single-axis models use axes[0].
  std::vector<Vec3d> motion_axes{Vec3d(0, 0, 1)};
  RMat trap_frequencies;  // atoms x axes
  RVec detuning_offsets;  // added to the diagonal of the spin Hamiltonian
  double eta = 0.02;      // Lamb-Dicke parameter at the mean trap frequency

  int size() const { return static_cast<int>(positions.size()); }
  int axes() const { return static_cast<int>(motion_axes.size()); }
  double mean_trap_frequency() const;
  double recoil_frequency() const;
  RMat lamb_dicke() const;  // eta_{j,alpha} = sqrt(nu_R / nu_{j,alpha})
  void validate() const;    // throws std::invalid_argument
};

// Plane-wave drive Omega exp(i k.r) with global detuning Delta.
struct DriveField {
  double rabi = 1e-3;
  Vec3d direction = Vec3d(0, 0, 1);
  double detuning = 0.0;

  CVec rabi_at(const EmitterArray& a) const;
  CVec rabi_gradient(const EmitterArray& a, const Vec3d& axis) const;
  CVec rabi_curvature(const EmitterArray& a, const Vec3d& axis_a, const Vec3d& axis_b) const;
};

// Pairwise couplings and their derivatives along the declared motion axes.
struct CouplingTables {
  CMat G;                             // G(0) = -i/2 on the diagonal
  std::vector<CMat> d1;               // [axis]
  std::vector<std::vector<CMat>> d2;  // [axis][axis], self-terms on the diagonal
};
CouplingTables coupling_tables(const EmitterArray& a);

enum class Convention { MainText, AppendixB };
Convention parse_convention(const std::string& tag);
std::string to_string(Convention c);

struct SteadySpinState {
  CVec s;      // excited-state amplitudes
  RMat beta;   // first-order displacements, atoms x axes
  std::vector<std::string> warnings;
};

SteadySpinState steady_displacements(const EmitterArray& a, const DriveField& drive,
                                     const CouplingTables& g, double weak_threshold = 0.1);
SteadySpinState steady_displacements(const EmitterArray& a, const DriveField& drive);

// (-Delta + delta_j) delta_ij + G~_ij. eta is atoms x axes; the appendix-B form
// needs the steady state for the displacement correction.
CMat spin_hamiltonian(const CouplingTables& g, const RMat& eta, const RVec& offsets, double detuning,
                      Convention conv = Convention::MainText, const SteadySpinState* steady = nullptr);
CMat build_spin_hamiltonian(const EmitterArray& a, const DriveField& drive,
                            Convention conv = Convention::MainText);

struct CollectiveSpectrum {
  double detuning = 0.0;
  CVec eps;  // -Delta + J - i gamma/2
  CMat phi;  // columns phi_lambda
  CMat c;    // c(i, lambda) = phi_{lambda,i} / sum_m phi_{lambda,m}^2

  int size() const { return static_cast<int>(eps.size()); }
  double shift(int l) const { return eps(l).real() + detuning; }
  double linewidth(int l) const { return -2.0 * eps(l).imag(); }
  cplx overlap(int l, int i, int j) const { return c(i, l) * phi(j, l); }
  double completeness_error() const;
};

CollectiveSpectrum collective_modes(const CMat& H, double detuning);

// Ring of emitters around a central target; all couplings in the
// {target, symmetric ring mode} basis.
struct RingTargetParameters {
  int ring_size = 0;
  double J_S = 0, Gamma_S = 0;  // sum_{n>=2} J_1n, sum_n Gamma_1n
  double J_tS = 0, Gamma_tS = 0;
  double gamma_t = 1.0;  // target self rate
};

// Gt is the coupling matrix G~ (no detunings). Throws if the target couples to
// non-symmetric ring modes.
RingTargetParameters ring_target_parameters(const CMat& Gt, int target_index, double tol = 1e-10);
// eta: per-atom Lamb-Dicke factors along the motion axis (0 for pinned atoms).
RingTargetParameters ring_target_parameters(const EmitterArray& a, int target_index, const RVec& eta,
                                            double tol = 1e-10);
CMat ring_target_hamiltonian(const RingTargetParameters& p, double detuning, double delta_tS);
double dark_detuning(const RingTargetParameters& p);

}  // namespace subradcool
