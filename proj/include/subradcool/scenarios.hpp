#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "subradcool/baselines.hpp"
#include "subradcool/lindblad.hpp"
#include "subradcool/motion.hpp"
#include "subradcool/spin_system.hpp"

namespace subradcool {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Polarization parse_polarization(const std::string& name);  // x, y, z, circular

enum class GeometryKind { Chain, Ring, Square, RingPlusCenter };
GeometryKind parse_geometry_kind(const std::string& s);
std::string to_string(GeometryKind k);

struct GeometrySpec {
  GeometryKind kind = GeometryKind::Chain;
  int atoms = 2;         // ring atoms for RingPlusCenter (the center is added last)
  double spacing = 0.2;  // chain/square lattice constant, ring nearest-neighbor distance
  double radius = 0.0;   // ring radius; overrides spacing when positive
  std::string polarization = "y";
  Vec3d motion_axis = Vec3d(0, 0, 1);
};

// Positions, polarization and motion axis. Trap frequencies are left to TrapProfile.
EmitterArray build_geometry(const GeometrySpec& spec);

struct TrapProfile {
  enum class Kind { Uniform, Gradient, Normal };
  Kind kind = Kind::Uniform;
  double nu_bar = 20.0;
  double delta_nu = 0.0;  // gradient step
  double sigma = 0.0;     // normal spread
  std::uint64_t seed = 0;

  // Normal draws use realization index r in the seed sequence.
  RVec frequencies(int n, int realization = 0) const;
};
TrapProfile::Kind parse_trap_kind(const std::string& s);

// nu_j = nu_bar + delta_nu (j - floor(N/2) - 1), j = 1..N.
RVec gradient_frequencies(int n, double nu_bar, double delta_nu);

EmitterArray make_array(const GeometrySpec& g, const TrapProfile& t, double eta, int realization = 0);

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
// written by index; the first exception (lowest index) is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

// Cooling-rate guess from the effective model (slowest damping among atoms).
double effective_rate_guess(const EmitterArray& a, const DriveField& drive);

// Array-cooling prediction with every atom at the mean trap frequency.
double optimal_array_occupation(const EmitterArray& a, const DriveField& drive);
// Independent-atom optimum at the mean trap frequency.
double independent_occupation(const EmitterArray& a, double rabi);

// Two-atom red-sideband detuning of the antisymmetric mode at the first
// atom's trap frequency.
double two_atom_detuning(const EmitterArray& a);

enum class CriticalDefinition { Optimal, Independent };
CriticalDefinition parse_critical_definition(const std::string& s);

struct CriticalRateOptions {
  double rabi_min = 1e-4;
  double rabi_max = 1.0;
  int points_per_decade = 12;
  double tolerance = 1.1;       // admissible nbar <= tolerance * reference
  double bisection_ratio = 1.02;
  int samples = 200;
};

struct CriticalRate {
  bool found = false;
  double rate = kNaN;
  double rabi = kNaN;
  double nbar = kNaN;
  double reference = kNaN;  // n_opt or n_ind
  std::vector<double> rabi_grid, nbar_grid, rate_grid;  // rate NaN where not evaluated
  std::string message;
};

// Full-model scan of the drive strength; the drive template fixes detuning and direction.
CriticalRate critical_rate_scan(const EmitterArray& a, const DriveField& drive_template, const Truncation& tr,
                                CriticalDefinition def, const CriticalRateOptions& opt = {});

struct BlockRun {
  std::vector<int> atoms;
  CoolingCurve curve;  // fitted on the block atoms
  RVec drift;          // |n_j(T) - n_j(0)| / n_j(0) for atoms outside the block, NaN inside
  double max_drift = 0.0;
  double n_ss_conditional = kNaN;  // block occupation with the other atoms in their motional vacuum
};

struct SequentialOptions {
  double block_detuning = -40.0;  // added to the drive detuning of atoms outside the block
  double horizon = 0.0;           // 0: from the effective-model rate guess
  int samples = 200;
};

std::vector<BlockRun> sequential_protocol(const EmitterArray& a, const std::vector<std::vector<int>>& blocks,
                                          const DriveField& drive, const Truncation& tr,
                                          const SequentialOptions& opt = {});

struct Percentiles {
  double p25 = kNaN, median = kNaN, p75 = kNaN;
};
// Linear interpolation between order statistics; NaNs are ignored.
Percentiles percentiles(std::vector<double> v);

enum class Pipeline { Effective, Full };
Pipeline parse_pipeline(const std::string& s);

struct EnsemblePoint {
  int realization = 0;
  double nbar = kNaN;
  double rate = kNaN;
  double detuning = kNaN;
  int mode = -1;
  bool ok = false;
  std::string message;
};

struct SweepResult {
  std::vector<EnsemblePoint> points;
  Percentiles nbar, rate;
  double n_ind = kNaN;
};

struct EnsembleOptions {
  int realizations = 30;
  Pipeline pipeline = Pipeline::Effective;
  Truncation truncation = Truncation::shared_single();
  int threads = 1;
};

// Each realization redraws trap frequencies and drives the red sideband of the
// collective mode with the lowest predicted occupation.
SweepResult ensemble_sweep(const GeometrySpec& g, const TrapProfile& profile, double eta, double rabi,
                           const EnsembleOptions& opt);

struct RingTargetOptions {
  double rabi = 1e-3;
  double nu_t = 50.0;
  double eta_t = 0.02;
  std::string polarization = "circular";
  double n0 = 1.0;     // initial target occupation for n_t(t)
  double horizon = 0.0;  // 0: 6 / Gamma
  int samples = 200;
};

struct RingTargetResult {
  RingTargetParameters params;
  double dark_detuning = kNaN;  // delta_tS that decouples the bright combination
  double delta_tS = kNaN;
  double detuning = kNaN;       // drive detuning on the dark mode's red sideband
  double gamma_d = kNaN;        // narrowest linewidth of the two-mode Hamiltonian
  double Rm = kNaN, Rp = kNaN;
  double rate = kNaN;
  double n_ss = kNaN;
  double n_isolated = kNaN;
  std::vector<double> times, n_t;
};

// Target atom at the center of a pinned ring (ring atoms carry no motion).
RingTargetResult ring_target_cooling(int ring_atoms, double radius, double delta_tS, const RingTargetOptions& opt = {});
// Same with delta_tS set to the dark value.
RingTargetResult ring_target_cooling_dark(int ring_atoms, double radius, const RingTargetOptions& opt = {});

struct RegimePoint {
  double delta_nu = 0, rabi = 0;
  double nbar = kNaN, n_ind = kNaN, ratio = kNaN;
  RegimeClassification regime;
  bool ok = false;
  std::string message;
};

// Two atoms along x with a gradient trap; detuning on the antisymmetric sideband.
std::vector<RegimePoint> regime_map(double d, const std::string& polarization, double nu_bar, double eta,
                                    const std::vector<double>& delta_nu, const std::vector<double>& rabi,
                                    int threads = 1);

}  // namespace subradcool
