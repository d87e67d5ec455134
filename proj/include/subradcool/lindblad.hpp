#pragma once

#include <map>
#include <string>
#include <vector>

#include "subradcool/numerics.hpp"
#include "subradcool/spin_system.hpp"

namespace subradcool {

struct Truncation {
  enum class Kind { PerAtomCutoff, SharedSingleExcitation, TotalPhonons };
  Kind kind = Kind::SharedSingleExcitation;
  int cutoff = 1;  // PerAtomCutoff: Fock states per atom; otherwise max total phonons

  static Truncation per_atom(int fock_states) { return {Kind::PerAtomCutoff, fock_states}; }
  static Truncation shared_single() { return {Kind::SharedSingleExcitation, 1}; }
  static Truncation total_phonons(int k) { return {Kind::TotalPhonons, k}; }

  // all spin configurations for PerAtomCutoff, at most one excitation otherwise
  bool single_spin_excitation() const { return kind != Kind::PerAtomCutoff; }
  int max_total_phonons() const { return kind == Kind::PerAtomCutoff ? -1 : cutoff; }
  std::string describe() const;
};

Truncation parse_truncation(const std::string& kind, int cutoff);

inline constexpr int kMaxHilbertDim = 1728;

// Product basis: spin configuration (bitmask) x phonon occupation vector.
// Flat index = spin_index * phonon_count + phonon_index.
struct HilbertBasis {
  int atoms = 0;
  std::vector<unsigned> spins;
  std::vector<std::vector<int>> phonons;
  std::map<std::vector<int>, int> phonon_index;

  int spin_dim() const { return static_cast<int>(spins.size()); }
  int phonon_dim() const { return static_cast<int>(phonons.size()); }
  int dim() const { return spin_dim() * phonon_dim(); }
  int index(int spin, int phonon) const { return spin * phonon_dim() + phonon; }
};

HilbertBasis make_basis(int atoms, const Truncation& tr);

// Operators on the truncated space and the assembled generator.
struct FullModel {
  HilbertBasis basis;
  Truncation truncation;
  std::vector<SpMat> sigma;  // lowering, per atom
  std::vector<SpMat> b;      // phonon annihilation, per atom
  std::vector<SpMat> X;      // eta_j (b_j + b_j^dag)
  SpMat H;                   // non-Hermitian effective Hamiltonian
  SpMat L;                   // Liouvillian on column-major vec(mu)

  int dim() const { return basis.dim(); }
  int liouville_dim() const { return dim() * dim(); }
  double trace_preservation_error() const;  // || 1^T L || / ||L||
};

// Single motion axis (axes[0]) per atom; G' and G'' along that axis included.
FullModel build_liouvillian(const EmitterArray& a, const DriveField& drive, const Truncation& tr);

// Vectorized density matrix, column-major.
struct DensityState {
  CVec vec;
  int dim = 0;

  CMat matrix() const;
  cplx trace() const;
  double hermiticity_error() const;
  double min_eigenvalue() const;
};

struct StateDiagnostics {
  double trace_error = 0.0;
  double hermiticity_error = 0.0;
  double min_eigenvalue = 0.0;
  bool ok() const { return trace_error <= 1e-8 && hermiticity_error <= 1e-10 && min_eigenvalue >= -1e-8; }
};
StateDiagnostics diagnose(const DensityState& rho);

DensityState ground_state(const FullModel& m);
// Uniform mixture of one phonon on each atom in `atoms` (all if empty), spins
// in the ground state. Needs a basis that holds single-phonon states.
DensityState single_phonon_mixture(const FullModel& m, const std::vector<int>& atoms = {});
// Product of Fock states |n_j> with spins in the ground state.
DensityState fock_product(const FullModel& m, const std::vector<int>& n);

// Linear functional f with f . vec(mu) = Tr(A mu).
CVec expectation_functional(const SpMat& A);

DensityState steady_state(const FullModel& m);

struct Trajectory {
  std::vector<double> times;
  std::vector<DensityState> states;
  StateDiagnostics worst;  // max errors / min eigenvalue over all samples
};

// Raises NumericalError if any sample violates the DensityState invariants.
Trajectory propagate(const FullModel& m, const DensityState& rho0, const std::vector<double>& times,
                     bool check_invariants = true);

struct Observables {
  RMat phonons;  // samples x atoms
  RMat spin_excitation;
  RVec mean_phonons;
};
Observables observables(const FullModel& m, const std::vector<DensityState>& states);

// Mean phonon number of `atoms` conditioned on `vacuum` atoms holding no phonons.
// Shared-phonon truncations block heating elsewhere while a phonon sits on an
// idle atom; conditioning removes that artifact.
double conditional_occupation(const FullModel& m, const DensityState& rho, const std::vector<int>& atoms,
                              const std::vector<int>& vacuum);

// Weight on the outermost phonon shell kept by the truncation (any atom at the
// per-atom cutoff, or total phonons at the cap).
double edge_population(const FullModel& m, const DensityState& rho);

// Steady states with more edge weight than this are flagged unreliable.
inline constexpr double kEdgeTolerance = 0.02;

struct CoolingCurve {
  std::vector<double> times;
  RMat phonons;  // samples x atoms
  RVec mean_phonons;
  ExponentialFit fit;
  double nbar_ss = 0.0;
  RVec n_ss;
  double edge_population = 0.0;  // of the steady state
  StateDiagnostics worst;
  std::vector<std::string> warnings;
  bool reliable = true;  // truncation validity guard
};

struct CoolingOptions {
  double horizon = 0.0;          // 0: 6 / rate_guess
  double rate_guess = 0.0;       // used when horizon == 0
  int samples = 200;
  std::vector<int> observed;     // atoms averaged into the fitted curve (all if empty)
  std::vector<int> initial;      // atoms carrying the initial phonon (all if empty)
  int horizon_refinements = 3;   // re-run with horizon 6/Gamma_fit when far off
};

CoolingCurve cooling_curve(const FullModel& m, const CoolingOptions& opt);
CoolingCurve cooling_curve(const EmitterArray& a, const DriveField& drive, const Truncation& tr,
                           const CoolingOptions& opt);

}  // namespace subradcool
