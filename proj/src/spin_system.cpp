#include "subradcool/spin_system.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace subradcool {

double EmitterArray::mean_trap_frequency() const {
  if (trap_frequencies.size() == 0) throw std::invalid_argument("EmitterArray: no trap frequencies");
  return trap_frequencies.mean();
}

double EmitterArray::recoil_frequency() const { return eta * eta * mean_trap_frequency(); }

RMat EmitterArray::lamb_dicke() const {
  const double nu_bar = mean_trap_frequency();
  return (nu_bar / trap_frequencies.array()).sqrt().matrix() * eta;
}

void EmitterArray::validate() const {
  const int n = size();
  if (n < 1) throw std::invalid_argument("EmitterArray: at least one emitter required");
  if (motion_axes.empty()) throw std::invalid_argument("EmitterArray: no motion axes");
  for (const auto& a : motion_axes)
    if (std::abs(a.norm() - 1.0) > 1e-12) throw std::invalid_argument("EmitterArray: motion axes must be unit vectors");
  if (trap_frequencies.rows() != n || trap_frequencies.cols() != axes())
    throw std::invalid_argument("EmitterArray: trap_frequencies must be atoms x axes");
  if ((trap_frequencies.array() <= 0.0).any() || !trap_frequencies.allFinite())
    throw std::invalid_argument("EmitterArray: trap frequencies must be positive");
  if (detuning_offsets.size() != 0 && detuning_offsets.size() != n)
    throw std::invalid_argument("EmitterArray: detuning_offsets size mismatch");
  if (std::abs(polarization.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("EmitterArray: polarization must have unit norm");
  if (!(eta >= 0.0)) throw std::invalid_argument("EmitterArray: eta must be non-negative");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((positions[i] - positions[j]).norm() == 0.0)
        throw std::invalid_argument("EmitterArray: coincident trap centers");
}

CVec DriveField::rabi_at(const EmitterArray& a) const {
  CVec out(a.size());
  for (int j = 0; j < a.size(); ++j) out(j) = rabi * std::exp(I1 * to_phase(direction.dot(a.positions[j])));
  return out;
}

CVec DriveField::rabi_gradient(const EmitterArray& a, const Vec3d& axis) const {
  return (I1 * direction.dot(axis)) * rabi_at(a);
}

CVec DriveField::rabi_curvature(const EmitterArray& a, const Vec3d& axis_a, const Vec3d& axis_b) const {
  return (-direction.dot(axis_a) * direction.dot(axis_b)) * rabi_at(a);
}

CouplingTables coupling_tables(const EmitterArray& a) {
  const int n = a.size(), na = a.axes();
  CouplingTables t;
  t.G.resize(n, n);
  t.d1.assign(na, CMat(n, n));
  t.d2.assign(na, std::vector<CMat>(na, CMat(n, n)));
  std::vector<CVec3<double>> ax(na);
  for (int k = 0; k < na; ++k) ax[k] = a.motion_axes[k].cast<cplx>();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto jet = pair_jet(a.positions[i], a.positions[j], a.polarization);
      t.G(i, j) = jet.value;
      for (int p = 0; p < na; ++p) {
        t.d1[p](i, j) = ax[p].transpose() * jet.gradient;
        for (int q = 0; q < na; ++q) t.d2[p][q](i, j) = ax[p].transpose() * jet.hessian * ax[q];
      }
    }
  }
  return t;
}

Convention parse_convention(const std::string& tag) {
  if (tag == "main-text" || tag == "main_text") return Convention::MainText;
  if (tag == "appendix-B" || tag == "appendix-b" || tag == "appendix_b") return Convention::AppendixB;
  throw std::invalid_argument("unknown convention '" + tag + "' (expected main-text or appendix-B)");
}

std::string to_string(Convention c) { return c == Convention::MainText ? "main-text" : "appendix-B"; }

SteadySpinState steady_displacements(const EmitterArray& a, const DriveField& drive, const CouplingTables& g,
                                     double weak_threshold) {
  const int n = a.size();
  CMat A = g.G;
  A.diagonal().array() -= drive.detuning;
  if (a.detuning_offsets.size() == n) A.diagonal() += a.detuning_offsets.cast<cplx>();
  SteadySpinState out;
  const CVec omega = drive.rabi_at(a);
  if (omega.squaredNorm() == 0.0) {
    out.s = CVec::Zero(n);
  } else {
    try {
      out.s = solve_linear(A, -omega);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("steady_displacements: drive resonant with a lossless mode: ") + e.what());
    }
  }
  out.beta = RMat::Zero(n, a.axes());
  for (int k = 0; k < a.axes(); ++k) {
    const CVec dOmega = drive.rabi_gradient(a, a.motion_axes[k]);
    for (int i = 0; i < n; ++i) {
      cplx acc = dOmega(i) * std::conj(out.s(i));
      for (int j = 0; j < n; ++j)
        if (j != i) acc += g.d1[k](i, j) * std::conj(out.s(i)) * out.s(j);
      out.beta(i, k) = -2.0 / a.trap_frequencies(i, k) * acc.real();
    }
  }
  const double smax = out.s.size() ? out.s.cwiseAbs().maxCoeff() : 0.0;
  if (smax > weak_threshold) {
    std::ostringstream msg;
    msg << "weak-excitation threshold exceeded: max |s| = " << smax << " > " << weak_threshold;
    out.warnings.push_back(msg.str());
  }
  return out;
}

SteadySpinState steady_displacements(const EmitterArray& a, const DriveField& drive) {
  return steady_displacements(a, drive, coupling_tables(a));
}

CMat spin_hamiltonian(const CouplingTables& g, const RMat& eta, const RVec& offsets, double detuning, Convention conv,
                      const SteadySpinState* steady) {
  const int n = static_cast<int>(g.G.rows());
  const int na = static_cast<int>(eta.cols());
  if (eta.rows() != n || static_cast<int>(g.d2.size()) < na)
    throw std::invalid_argument("spin_hamiltonian: eta shape mismatch");
  CMat H = g.G;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < na; ++k) {
        const double e2 = eta(i, k) * eta(i, k) + eta(j, k) * eta(j, k);
        if (i != j || conv == Convention::AppendixB) H(i, j) += 0.5 * e2 * g.d2[k][k](i, j);
      }
    }
  }
  if (conv == Convention::AppendixB) {
    if (!steady) throw std::invalid_argument("spin_hamiltonian: appendix-B form needs the steady state");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        for (int k = 0; k < na; ++k) {
          const double shift = eta(i, k) * eta(i, k) * steady->beta(i, k) - eta(j, k) * eta(j, k) * steady->beta(j, k);
          H(i, j) += 2.0 * g.d1[k](i, j) * shift;
        }
      }
  }
  H.diagonal().array() -= detuning;
  if (offsets.size() == n) H.diagonal() += offsets.cast<cplx>();
  return H;
}

CMat build_spin_hamiltonian(const EmitterArray& a, const DriveField& drive, Convention conv) {
  a.validate();
  const auto g = coupling_tables(a);
  if (conv == Convention::AppendixB) {
    const auto st = steady_displacements(a, drive, g);
    return spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, drive.detuning, conv, &st);
  }
  return spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, drive.detuning, conv);
}

double CollectiveSpectrum::completeness_error() const {
  const CMat r = c * phi.transpose() - CMat::Identity(size(), size());
  return r.cwiseAbs().maxCoeff();
}

CollectiveSpectrum collective_modes(const CMat& H, double detuning) {
  const auto ed = eig_general(H);
  CollectiveSpectrum sp;
  sp.detuning = detuning;
  sp.eps = ed.values;
  sp.phi = ed.vectors;
  const int n = static_cast<int>(H.rows());
  sp.c.resize(n, n);
  for (int l = 0; l < n; ++l) {
    const cplx norm2 = (sp.phi.col(l).array() * sp.phi.col(l).array()).sum();
    if (std::abs(norm2) < 1e-12) throw NumericalError("collective_modes: self-orthogonal eigenvector");
    sp.c.col(l) = sp.phi.col(l) / norm2;
  }
  const double err = sp.completeness_error();
  if (err > 1e-6) {
    std::ostringstream msg;
    msg << "collective_modes: completeness residual " << err;
    throw NumericalError(msg.str());
  }
  return sp;
}

RingTargetParameters ring_target_parameters(const CMat& Gt, int t, double tol) {
  const int n1 = static_cast<int>(Gt.rows());
  if (t < 0 || t >= n1 || n1 < 2) throw std::invalid_argument("ring_target_parameters: bad target index");
  std::vector<int> ring;
  for (int i = 0; i < n1; ++i)
    if (i != t) ring.push_back(i);
  const int n = static_cast<int>(ring.size());
  const double scale = Gt.cwiseAbs().maxCoeff();
  // the target must see every ring atom identically, and the uniform ring
  // vector must be an eigenvector of the ring block
  const cplx g_t1 = Gt(t, ring[0]);
  cplx row0 = 0;
  for (int m : ring) row0 += Gt(ring[0], m);
  for (int a : ring) {
    if (std::abs(Gt(t, a) - g_t1) > tol * scale || std::abs(Gt(a, t) - g_t1) > tol * scale)
      throw std::invalid_argument("ring_target_parameters: target couples to non-symmetric ring modes");
    cplx row = 0;
    for (int m : ring) row += Gt(a, m);
    if (std::abs(row - row0) > tol * scale * n)
      throw std::invalid_argument("ring_target_parameters: ring is not symmetric");
  }
  RingTargetParameters p;
  p.ring_size = n;
  p.J_S = row0.real() - Gt(ring[0], ring[0]).real();
  p.Gamma_S = -2.0 * row0.imag();
  p.J_tS = std::sqrt(double(n)) * g_t1.real();
  p.Gamma_tS = -2.0 * std::sqrt(double(n)) * g_t1.imag();
  p.gamma_t = -2.0 * Gt(t, t).imag();
  return p;
}

RingTargetParameters ring_target_parameters(const EmitterArray& a, int target_index, const RVec& eta, double tol) {
  const auto g = coupling_tables(a);
  if (eta.size() != a.size()) throw std::invalid_argument("ring_target_parameters: eta size mismatch");
  const CMat Gt = spin_hamiltonian(g, RMat(eta), RVec(), 0.0, Convention::MainText);
  return ring_target_parameters(Gt, target_index, tol);
}

CMat ring_target_hamiltonian(const RingTargetParameters& p, double detuning, double delta_tS) {
  CMat H(2, 2);
  H(0, 0) = cplx(-detuning + delta_tS, -p.gamma_t / 2);
  H(1, 1) = cplx(-detuning + p.J_S, -p.Gamma_S / 2);
  H(0, 1) = H(1, 0) = cplx(p.J_tS, -p.Gamma_tS / 2);
  return H;
}

double dark_detuning(const RingTargetParameters& p) {
  if (p.Gamma_tS == 0.0) throw std::invalid_argument("dark_detuning: zero dissipative coupling");
  return p.J_S - p.J_tS * (p.Gamma_S - p.gamma_t) / p.Gamma_tS;
}

}  // namespace subradcool
