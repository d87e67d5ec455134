#include "subradcool/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace subradcool {

std::string Truncation::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::PerAtomCutoff: os << "per_atom_cutoff(" << cutoff << ")"; break;
    case Kind::SharedSingleExcitation: os << "shared"; break;
    case Kind::TotalPhonons: os << "total_phonons(" << cutoff << ")"; break;
  }
  return os.str();
}

Truncation parse_truncation(const std::string& kind, int cutoff) {
  if (kind == "per_atom_cutoff") {
    if (cutoff < 2) throw std::invalid_argument("per_atom_cutoff needs at least 2 Fock states");
    return Truncation::per_atom(cutoff);
  }
  if (kind == "shared") return Truncation::shared_single();
  if (kind == "total_phonons") {
    if (cutoff < 1) throw std::invalid_argument("total_phonons needs a cutoff >= 1");
    return Truncation::total_phonons(cutoff);
  }
  throw std::invalid_argument("unknown truncation '" + kind + "'");
}

namespace {

void enumerate_phonons(int atoms, const Truncation& tr, std::vector<int>& cur, int j,
                       std::vector<std::vector<int>>& out) {
  if (j == atoms) {
    out.push_back(cur);
    return;
  }
  const int used = std::accumulate(cur.begin(), cur.begin() + j, 0);
  const int top = tr.kind == Truncation::Kind::PerAtomCutoff ? tr.cutoff - 1 : tr.cutoff - used;
  for (int n = 0; n <= top; ++n) {
    cur[j] = n;
    enumerate_phonons(atoms, tr, cur, j + 1, out);
  }
  cur[j] = 0;
}

SpMat identity(int n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

SpMat kron(const SpMat& A, const SpMat& B) {
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<size_t>(A.nonZeros() * B.nonZeros()));
  for (int ka = 0; ka < A.outerSize(); ++ka)
    for (SpMat::InnerIterator ia(A, ka); ia; ++ia)
      for (int kb = 0; kb < B.outerSize(); ++kb)
        for (SpMat::InnerIterator ib(B, kb); ib; ++ib)
          t.emplace_back(ia.row() * B.rows() + ib.row(), ia.col() * B.cols() + ib.col(), ia.value() * ib.value());
  SpMat K(A.rows() * B.rows(), A.cols() * B.cols());
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

// Accumulates c * vec(A mu B) = c (B^T kron A) vec(mu).
void add_sandwich(std::vector<Eigen::Triplet<cplx>>& t, int D, cplx c, const SpMat& A, const SpMat& B) {
  if (c == 0.0) return;
  for (int kb = 0; kb < B.outerSize(); ++kb)
    for (SpMat::InnerIterator ib(B, kb); ib; ++ib) {
      const int k = static_cast<int>(ib.row()), l = static_cast<int>(ib.col());
      for (int ka = 0; ka < A.outerSize(); ++ka)
        for (SpMat::InnerIterator ia(A, ka); ia; ++ia)
          t.emplace_back(l * D + ia.row(), k * D + ia.col(), c * ib.value() * ia.value());
    }
}

SpMat adjoint(const SpMat& A) { return SpMat(A.adjoint()); }

}  // namespace

HilbertBasis make_basis(int atoms, const Truncation& tr) {
  if (atoms < 1) throw std::invalid_argument("make_basis: need at least one atom");
  if (atoms > 16) throw std::invalid_argument("make_basis: too many atoms");
  if (tr.kind == Truncation::Kind::PerAtomCutoff && atoms > 3)
    throw std::invalid_argument("per_atom_cutoff supports at most 3 atoms");
  if (tr.kind == Truncation::Kind::SharedSingleExcitation && atoms > 8)
    throw std::invalid_argument("shared truncation supports at most 8 atoms");

  HilbertBasis b;
  b.atoms = atoms;
  if (tr.single_spin_excitation()) {
    b.spins.push_back(0u);
    for (int j = 0; j < atoms; ++j) b.spins.push_back(1u << j);
  } else {
    for (unsigned m = 0; m < (1u << atoms); ++m) b.spins.push_back(m);
  }
  // cheap size check before enumerating phonons
  double np = 1.0;
  if (tr.kind == Truncation::Kind::PerAtomCutoff) {
    np = std::pow(tr.cutoff, atoms);
  } else {
    for (int k = 1; k <= tr.cutoff; ++k) np = np * (atoms + k) / k;  // C(atoms+K, K)
  }
  if (np * b.spins.size() > kMaxHilbertDim) {
    std::ostringstream os;
    os << "truncated Hilbert space too large (" << np * b.spins.size() << " > " << kMaxHilbertDim << ")";
    throw std::invalid_argument(os.str());
  }
  std::vector<int> cur(atoms, 0);
  enumerate_phonons(atoms, tr, cur, 0, b.phonons);
  for (int i = 0; i < b.phonon_dim(); ++i) b.phonon_index[b.phonons[i]] = i;
  return b;
}

double FullModel::trace_preservation_error() const {
  const int D = dim();
  CVec f = CVec::Zero(liouville_dim());
  for (int a = 0; a < D; ++a) f(a + D * a) = 1.0;
  const CVec r = L.adjoint() * f;
  double scale = 0.0;
  for (int k = 0; k < L.outerSize(); ++k)
    for (SpMat::InnerIterator it(L, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  return scale > 0.0 ? r.cwiseAbs().maxCoeff() / scale : 0.0;
}

FullModel build_liouvillian(const EmitterArray& a, const DriveField& drive, const Truncation& tr) {
  a.validate();
  FullModel m;
  m.truncation = tr;
  m.basis = make_basis(a.size(), tr);
  const auto& B = m.basis;
  const int N = a.size(), ns = B.spin_dim(), np = B.phonon_dim(), D = B.dim();
  const RVec eta = a.lamb_dicke().col(0);
  const RVec nu = a.trap_frequencies.col(0);
  const Vec3d axis = a.motion_axes[0];

  const SpMat Is = identity(ns), Ip = identity(np);
  m.sigma.resize(N);
  m.b.resize(N);
  m.X.resize(N);
  std::vector<SpMat> X2(N), num(N);
  for (int j = 0; j < N; ++j) {
    std::vector<Eigen::Triplet<cplx>> ts, tp;
    for (int s = 0; s < ns; ++s)
      if (B.spins[s] & (1u << j)) {
        const unsigned lowered = B.spins[s] & ~(1u << j);
        const auto it = std::find(B.spins.begin(), B.spins.end(), lowered);
        ts.emplace_back(static_cast<int>(it - B.spins.begin()), s, 1.0);
      }
    for (int p = 0; p < np; ++p) {
      if (B.phonons[p][j] == 0) continue;
      auto lowered = B.phonons[p];
      lowered[j] -= 1;
      const auto it = B.phonon_index.find(lowered);
      if (it != B.phonon_index.end()) tp.emplace_back(it->second, p, std::sqrt(double(B.phonons[p][j])));
    }
    SpMat sj(ns, ns), bj(np, np);
    sj.setFromTriplets(ts.begin(), ts.end());
    bj.setFromTriplets(tp.begin(), tp.end());
    const SpMat xj = eta(j) * (bj + adjoint(bj));
    m.sigma[j] = kron(sj, Ip);
    m.b[j] = kron(Is, bj);
    m.X[j] = kron(Is, xj);
    X2[j] = m.X[j] * m.X[j];
    num[j] = adjoint(m.b[j]) * m.b[j];
  }

  const auto g = coupling_tables(a);
  const CMat& G = g.G;
  const CMat& G1 = g.d1[0];
  const CMat& G2 = g.d2[0][0];
  const CVec om = drive.rabi_at(a);
  const CVec om1 = drive.rabi_gradient(a, axis);
  const CVec om2 = drive.rabi_curvature(a, axis, axis);
  const RVec offs = a.detuning_offsets.size() == N ? a.detuning_offsets : RVec(RVec::Zero(N));

  std::vector<SpMat> sd(N), A1(N), A2(N);
  for (int j = 0; j < N; ++j) {
    sd[j] = adjoint(m.sigma[j]);
    A1[j] = m.sigma[j] * m.X[j];
    A2[j] = m.sigma[j] * X2[j];
  }

  SpMat H(D, D);
  for (int j = 0; j < N; ++j) {
    H += nu(j) * num[j];
    const SpMat drive_j = SpMat(om(j) * sd[j]) + SpMat(om1(j) * (m.X[j] * sd[j])) + SpMat(0.5 * om2(j) * (X2[j] * sd[j]));
    H += drive_j + adjoint(drive_j);
    H += cplx(-drive.detuning + offs(j)) * (sd[j] * m.sigma[j]);
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const SpMat hop = sd[i] * m.sigma[j];
      H += G(i, j) * hop;
      if (i == j) continue;
      H += G1(i, j) * SpMat((m.X[i] - m.X[j]) * hop);
      H += 0.5 * G2(i, j) * SpMat((X2[i] + X2[j] - 2.0 * m.X[i] * m.X[j]) * hop);
    }
  H.prune(cplx(0.0));
  m.H = H;

  std::vector<Eigen::Triplet<cplx>> t;
  const SpMat Id = identity(D);
  add_sandwich(t, D, -I1, H, Id);
  add_sandwich(t, D, I1, Id, adjoint(H));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double g0 = -2.0 * G(i, j).imag();
      const double g2 = -2.0 * G2(i, j).imag();
      add_sandwich(t, D, g0, m.sigma[j], sd[i]);
      if (i != j) {
        const double g1 = -2.0 * G1(i, j).imag();
        add_sandwich(t, D, g1, m.sigma[j], adjoint(A1[i]));
        add_sandwich(t, D, -g1, A1[j], sd[i]);
      }
      add_sandwich(t, D, 0.5 * g2, m.sigma[j], adjoint(A2[i]));
      add_sandwich(t, D, 0.5 * g2, A2[j], sd[i]);
      add_sandwich(t, D, -g2, A1[j], adjoint(A1[i]));
    }
  m.L.resize(D * D, D * D);
  m.L.setFromTriplets(t.begin(), t.end());
  m.L.prune(cplx(0.0));
  return m;
}

CMat DensityState::matrix() const { return Eigen::Map<const CMat>(vec.data(), dim, dim); }

cplx DensityState::trace() const {
  cplx s = 0.0;
  for (int a = 0; a < dim; ++a) s += vec(a + dim * a);
  return s;
}

double DensityState::hermiticity_error() const {
  const CMat m = matrix();
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double DensityState::min_eigenvalue() const {
  const CMat m = matrix();
  const CMat h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

StateDiagnostics diagnose(const DensityState& rho) {
  StateDiagnostics d;
  d.trace_error = std::abs(rho.trace() - 1.0);
  d.hermiticity_error = rho.hermiticity_error();
  d.min_eigenvalue = rho.min_eigenvalue();
  return d;
}

namespace {

DensityState from_diagonal(const FullModel& m, const std::vector<std::pair<int, double>>& entries) {
  DensityState r;
  r.dim = m.dim();
  r.vec = CVec::Zero(m.liouville_dim());
  for (const auto& [k, w] : entries) r.vec(k + r.dim * k) += w;
  return r;
}

}  // namespace

DensityState ground_state(const FullModel& m) {
  const std::vector<int> zero(m.basis.atoms, 0);
  return from_diagonal(m, {{m.basis.index(0, m.basis.phonon_index.at(zero)), 1.0}});
}

DensityState single_phonon_mixture(const FullModel& m, const std::vector<int>& atoms) {
  std::vector<int> sel = atoms;
  if (sel.empty()) {
    sel.resize(m.basis.atoms);
    std::iota(sel.begin(), sel.end(), 0);
  }
  std::vector<std::pair<int, double>> e;
  for (int j : sel) {
    if (j < 0 || j >= m.basis.atoms) throw std::invalid_argument("single_phonon_mixture: atom out of range");
    std::vector<int> occ(m.basis.atoms, 0);
    occ[j] = 1;
    const auto it = m.basis.phonon_index.find(occ);
    if (it == m.basis.phonon_index.end()) throw std::invalid_argument("single_phonon_mixture: state not in basis");
    e.emplace_back(m.basis.index(0, it->second), 1.0 / sel.size());
  }
  return from_diagonal(m, e);
}

DensityState fock_product(const FullModel& m, const std::vector<int>& n) {
  if (static_cast<int>(n.size()) != m.basis.atoms) throw std::invalid_argument("fock_product: size mismatch");
  const auto it = m.basis.phonon_index.find(n);
  if (it == m.basis.phonon_index.end()) throw std::invalid_argument("fock_product: state not in basis");
  return from_diagonal(m, {{m.basis.index(0, it->second), 1.0}});
}

CVec expectation_functional(const SpMat& A) {
  const int D = static_cast<int>(A.rows());
  CVec f = CVec::Zero(static_cast<Eigen::Index>(D) * D);
  // Tr(A mu) = sum_ab A_ab mu_ba, and mu_ba sits at b + D a
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) f(it.col() + D * it.row()) += it.value();
  return f;
}

namespace {

double max_abs(const SpMat& A) {
  double s = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) s = std::max(s, std::abs(it.value()));
  return s;
}

// T X - X T^dag = C for upper-triangular T with spectrum in the lower half plane.
CMat solve_triangular_sylvester(const CMat& T, const CMat& C) {
  const int n = static_cast<int>(T.rows());
  CMat X(n, n);
  CVec rhs(n);
  for (int k = n - 1; k >= 0; --k) {
    rhs = C.col(k);
    for (int m = k + 1; m < n; ++m) rhs += X.col(m) * std::conj(T(k, m));
    const cplx shift = std::conj(T(k, k));
    for (int i = n - 1; i >= 0; --i) {
      cplx acc = rhs(i);
      for (int j = i + 1; j < n; ++j) acc -= T(i, j) * X(j, k);
      X(i, k) = acc / (T(i, i) - shift);
    }
  }
  return X;
}

// (T - lam) x = rhs, T upper triangular.
void shifted_back_substitution(const CMat& T, double lam, Eigen::Ref<CVec> x) {
  const int n = static_cast<int>(T.rows());
  for (int i = n - 1; i >= 0; --i) {
    cplx acc = x(i);
    for (int j = i + 1; j < n; ++j) acc -= T(i, j) * x(j);
    x(i) = acc / (T(i, i) - lam);
  }
}

// Steady state for bases with at most one spin excitation. The ground-spin
// Hamiltonian block is diagonal and recycling only feeds the excited block
// back into the ground block, so coherences and excited populations follow
// from Sylvester solves and the remaining equation lives on the ground block.
// The excited-sector blocks are handled in the Schur basis of H_ee.
bool steady_state_by_sectors(const FullModel& m, DensityState& out) {
  const int D = m.dim(), np = m.basis.phonon_dim(), ne = D - np;
  const CMat H(m.H);
  const CMat Hgg = H.topLeftCorner(np, np);
  const RVec h = Hgg.diagonal().real();
  if ((Hgg - CMat(h.cast<cplx>().asDiagonal())).cwiseAbs().maxCoeff() > 1e-13 * (1.0 + h.cwiseAbs().maxCoeff()))
    return false;
  Eigen::ComplexSchur<CMat> schur(H.bottomRightCorner(ne, ne));
  if (schur.info() != Eigen::Success) return false;
  const CMat& U = schur.matrixU();
  const CMat& T = schur.matrixT();
  const CMat Ud = U.adjoint();
  const CMat Vge = H.topRightCorner(np, ne) * U;    // V_ge U
  const CMat Veg = Ud * H.bottomLeftCorner(ne, np); // U^dag V_eg

  struct Blocks {
    CMat ge, eg, ee;  // Schur coordinates: Z_ge U, U^dag Z_eg, U^dag W U
  };
  auto coherences = [&](const CMat& y, Blocks& r) {
    // z (h_a - T^dag) = c_a  <=>  (T - h_a) z^dag = c_a^dag
    r.ge = (y * Vge - Vge * r.ee).adjoint();
    for (int a = 0; a < np; ++a) {
      shifted_back_substitution(T, h(a), r.ge.col(a));
      r.ge.col(a) *= -1.0;
    }
    r.ge.adjointInPlace();
    r.eg = r.ee * Veg - Veg * y;
    for (int b = 0; b < np; ++b) shifted_back_substitution(T, h(b), r.eg.col(b));
  };
  auto respond = [&](const CMat& y, Blocks& r) {
    r.ee = CMat::Zero(ne, ne);
    for (int it = 0; it < 60; ++it) {
      coherences(y, r);
      CMat W = solve_triangular_sylvester(T, r.eg * Vge - Veg * r.ge);
      const double change = (W - r.ee).cwiseAbs().maxCoeff();
      const double size = W.cwiseAbs().maxCoeff();
      r.ee.swap(W);
      if (!std::isfinite(change)) return false;
      if (change <= 1e-15 * size || size == 0.0) {
        coherences(y, r);
        return true;
      }
    }
    return false;
  };
  auto to_lab = [&](Blocks& r) {
    r.ge = r.ge * Ud;
    r.eg = U * r.eg;
    r.ee = U * r.ee * Ud;
  };

  // Rows of L acting on the ground block, split by source sector.
  const int ngg = np * np;
  std::vector<Eigen::Triplet<cplx>> tgg, tge, teg, tee;
  for (int k = 0; k < m.L.outerSize(); ++k) {
    const int ca = k % D, cb = k / D;
    for (SpMat::InnerIterator it(m.L, k); it; ++it) {
      const int ra = static_cast<int>(it.row() % D), rb = static_cast<int>(it.row() / D);
      if (ra >= np || rb >= np) continue;
      const int row = ra + np * rb;
      if (ca < np && cb < np)
        tgg.emplace_back(row, ca + np * cb, it.value());
      else if (ca < np)
        tge.emplace_back(row, ca + np * (cb - np), it.value());
      else if (cb < np)
        teg.emplace_back(row, (ca - np) + ne * cb, it.value());
      else
        tee.emplace_back(row, (ca - np) + ne * (cb - np), it.value());
    }
  }
  SpMat Lgg(ngg, ngg), Lge(ngg, np * ne), Leg(ngg, ne * np), Lee(ngg, ne * ne);
  Lgg.setFromTriplets(tgg.begin(), tgg.end());
  Lge.setFromTriplets(tge.begin(), tge.end());
  Leg.setFromTriplets(teg.begin(), teg.end());
  Lee.setFromTriplets(tee.begin(), tee.end());

  // The reduced generator maps y^dag to F(y)^dag, so only a <= b is solved.
  CMat K(ngg, ngg);
  CVec trace_row(ngg);
  Blocks r;
  for (int b = 0; b < np; ++b)
    for (int a = 0; a <= b; ++a) {
      CMat y = CMat::Zero(np, np);
      y(a, b) = 1.0;
      if (!respond(y, r)) return false;
      to_lab(r);
      const int k = a + np * b;
      K.col(k) = Lgg.col(k) + Lge * Eigen::Map<const CVec>(r.ge.data(), r.ge.size()) +
                 Leg * Eigen::Map<const CVec>(r.eg.data(), r.eg.size()) +
                 Lee * Eigen::Map<const CVec>(r.ee.data(), r.ee.size());
      trace_row(k) = (a == b ? 1.0 : 0.0) + r.ee.trace();
      if (a == b) continue;
      const int kt = b + np * a;
      const CMat F = Eigen::Map<const CMat>(K.col(k).data(), np, np).adjoint();
      K.col(kt) = Eigen::Map<const CVec>(F.data(), F.size());
      trace_row(kt) = std::conj(r.ee.trace());
    }
  K.row(0) = trace_row.transpose();
  CVec rhs = CVec::Zero(ngg);
  rhs(0) = 1.0;
  const CVec yv = K.partialPivLu().solve(rhs);
  if (!yv.allFinite()) return false;
  CMat y = Eigen::Map<const CMat>(yv.data(), np, np);
  y = 0.5 * (y + y.adjoint());
  if (!respond(y, r)) return false;
  to_lab(r);

  CMat mu(D, D);
  mu.topLeftCorner(np, np) = y;
  mu.topRightCorner(np, ne) = r.ge;
  mu.bottomLeftCorner(ne, np) = r.eg;
  mu.bottomRightCorner(ne, ne) = r.ee;
  out.dim = D;
  out.vec = Eigen::Map<const CVec>(mu.data(), mu.size());
  return true;
}

DensityState steady_state_sparse_lu(const FullModel& m) {
  const int D = m.dim(), n = m.liouville_dim();
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<size_t>(m.L.nonZeros() + D));
  for (int k = 0; k < m.L.outerSize(); ++k)
    for (SpMat::InnerIterator it(m.L, k); it; ++it)
      if (it.row() != 0) t.emplace_back(it.row(), it.col(), it.value());
  for (int a = 0; a < D; ++a) t.emplace_back(0, a + D * a, 1.0);
  SpMat A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw NumericalError("steady_state: factorization failed (" + lu.lastErrorMessage() + ")");
  CVec rhs = CVec::Zero(n);
  rhs(0) = 1.0;
  DensityState r;
  r.dim = D;
  r.vec = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !r.vec.allFinite()) throw NumericalError("steady_state: solve failed");
  return r;
}

}  // namespace

DensityState steady_state(const FullModel& m) {
  DensityState r;
  if (!(m.truncation.single_spin_excitation() && steady_state_by_sectors(m, r))) r = steady_state_sparse_lu(m);
  const double res = (m.L * r.vec).cwiseAbs().maxCoeff();
  if (res > 1e-12 * max_abs(m.L)) {
    std::ostringstream os;
    os << "steady_state: residual " << res << " too large";
    throw NumericalError(os.str());
  }
  return r;
}

namespace {

void accumulate(StateDiagnostics& worst, const StateDiagnostics& d) {
  worst.trace_error = std::max(worst.trace_error, d.trace_error);
  worst.hermiticity_error = std::max(worst.hermiticity_error, d.hermiticity_error);
  worst.min_eigenvalue = std::min(worst.min_eigenvalue, d.min_eigenvalue);
}

constexpr int kDensePropagatorLimit = 1600;

}  // namespace

Trajectory propagate(const FullModel& m, const DensityState& rho0, const std::vector<double>& times,
                     bool check_invariants) {
  if (rho0.dim != m.dim()) throw std::invalid_argument("propagate: state dimension mismatch");
  if (times.empty()) throw std::invalid_argument("propagate: empty time grid");
  for (size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw std::invalid_argument("propagate: times must increase");

  Trajectory tr;
  tr.times = times;
  tr.worst = diagnose(rho0);
  const int n = m.liouville_dim();
  const double t0 = 0.0;

  bool uniform = times.size() > 2;
  const double dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  for (size_t k = 2; k < times.size() && uniform; ++k)
    uniform = std::abs(times[k] - times[k - 1] - dt) <= 1e-9 * std::abs(dt);

  // Real coordinates: the diagonal of mu in place, Re mu_ab in slot (a, b) and
  // Im mu_ab in slot (b, a) for a < b. The generator is real there, so the
  // state stays Hermitian exactly. On top of that the first diagonal entry is
  // replaced by the trace; the generator's first row then vanishes identically
  // and the trace is carried exactly through long propagations.
  const int D = m.dim();
  using RSp = Eigen::SparseMatrix<double>;
  SpMat T(n, n), Tinv(n, n);  // vec mu = T r
  {
    std::vector<Eigen::Triplet<cplx>> t, ti;
    for (int a = 0; a < D; ++a) {
      t.emplace_back(a + D * a, a + D * a, 1.0);
      ti.emplace_back(a + D * a, a + D * a, 1.0);
      for (int b = a + 1; b < D; ++b) {
        const int up = a + D * b, lo = b + D * a;
        t.emplace_back(up, up, 1.0);
        t.emplace_back(up, lo, I1);
        t.emplace_back(lo, up, 1.0);
        t.emplace_back(lo, lo, -I1);
        ti.emplace_back(up, up, 0.5);
        ti.emplace_back(up, lo, 0.5);
        ti.emplace_back(lo, up, -0.5 * I1);
        ti.emplace_back(lo, lo, 0.5 * I1);
      }
    }
    T.setFromTriplets(t.begin(), t.end());
    Tinv.setFromTriplets(ti.begin(), ti.end());
  }
  auto to_coords = [&](const CVec& v) {
    RVec r = (Tinv * v).real();
    for (int a = 1; a < D; ++a) r(0) += r(a + D * a);
    return r;
  };
  auto from_coords = [&](RVec r) {
    for (int a = 1; a < D; ++a) r(0) -= r(a + D * a);
    return CVec(T * r.cast<cplx>());
  };
  RSp A;
  {
    const SpMat Lc = Tinv * m.L * T;
    const RSp R = Lc.real();
    if (RSp(Lc.imag()).coeffs().cwiseAbs().maxCoeff() > 1e-12 * R.coeffs().cwiseAbs().maxCoeff())
      throw NumericalError("propagate: generator does not preserve Hermiticity");
    const RVec c = R.col(0);
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < R.outerSize(); ++k)
      for (RSp::InnerIterator it(R, k); it; ++it)
        if (it.row() != 0) t.emplace_back(it.row(), it.col(), it.value());
    // - c g^T with g the indicator of the diagonal entries other than the first
    for (int r = 1; r < n; ++r)
      if (c(r) != 0.0)
        for (int a = 1; a < D; ++a) t.emplace_back(r, a + D * a, -c(r));
    A.resize(n, n);
    A.setFromTriplets(t.begin(), t.end());
    A.prune(0.0);
  }

  RVec y = to_coords(rho0.vec);
  auto push = [&](const RVec& yk) {
    DensityState s{from_coords(yk), m.dim()};
    if (check_invariants) {
      const auto d = diagnose(s);
      accumulate(tr.worst, d);
      if (!d.ok()) {
        std::ostringstream os;
        os << "propagate: density-matrix invariants violated (trace err " << d.trace_error << ", hermiticity "
           << d.hermiticity_error << ", min eigenvalue " << d.min_eigenvalue << ")";
        throw NumericalError(os.str());
      }
    }
    tr.states.push_back(std::move(s));
  };

  if (n <= kDensePropagatorLimit) {
    const RMat Ad(A);
    auto propagator = [&](double h) {
      RMat U = (Ad * h).exp();
      U.row(0).setZero();  // exact: the first row of the generator is zero
      U(0, 0) = 1.0;
      return U;
    };
    if (times[0] != t0) y = propagator(times[0]) * y;
    push(y);
    if (uniform) {
      const RMat U = propagator(dt);
      for (size_t k = 1; k < times.size(); ++k) {
        y = U * y;
        push(y);
      }
    } else {
      for (size_t k = 1; k < times.size(); ++k) {
        y = propagator(times[k] - times[k - 1]) * y;
        push(y);
      }
    }
  } else {
    // real data in complex storage stays real through the Krylov recursion
    const SpMat Ac = A.cast<cplx>();
    const double trace = y(0);
    auto step = [&](double h) {
      y = krylov_expm_action(Ac, y.cast<cplx>(), h).real();
      y(0) = trace;
    };
    if (times[0] != t0) step(times[0]);
    push(y);
    for (size_t k = 1; k < times.size(); ++k) {
      step(times[k] - times[k - 1]);
      push(y);
    }
  }
  return tr;
}

Observables observables(const FullModel& m, const std::vector<DensityState>& states) {
  const int N = m.basis.atoms, S = static_cast<int>(states.size());
  std::vector<CVec> fn(N), fs(N);
  for (int j = 0; j < N; ++j) {
    fn[j] = expectation_functional(SpMat(adjoint(m.b[j]) * m.b[j]));
    fs[j] = expectation_functional(SpMat(adjoint(m.sigma[j]) * m.sigma[j]));
  }
  Observables o;
  o.phonons.resize(S, N);
  o.spin_excitation.resize(S, N);
  for (int k = 0; k < S; ++k)
    for (int j = 0; j < N; ++j) {
      o.phonons(k, j) = fn[j].transpose().cwiseProduct(states[k].vec.transpose()).sum().real();
      o.spin_excitation(k, j) = fs[j].transpose().cwiseProduct(states[k].vec.transpose()).sum().real();
    }
  o.mean_phonons = o.phonons.rowwise().mean();
  return o;
}

double conditional_occupation(const FullModel& m, const DensityState& rho, const std::vector<int>& atoms,
                              const std::vector<int>& vacuum) {
  if (atoms.empty()) throw std::invalid_argument("conditional_occupation: no atoms");
  const auto& B = m.basis;
  const int D = B.dim();
  double norm = 0.0, num = 0.0;
  for (int s = 0; s < B.spin_dim(); ++s)
    for (int p = 0; p < B.phonon_dim(); ++p) {
      const auto& occ = B.phonons[p];
      if (std::any_of(vacuum.begin(), vacuum.end(), [&](int j) { return occ.at(j) != 0; })) continue;
      const int k = B.index(s, p);
      const double w = rho.vec(k + D * k).real();
      norm += w;
      for (int j : atoms) num += w * occ.at(j);
    }
  if (!(norm > 0.0)) throw NumericalError("conditional_occupation: conditioning event has zero weight");
  return num / norm / atoms.size();
}

double edge_population(const FullModel& m, const DensityState& rho) {
  const auto& B = m.basis;
  const int D = B.dim();
  const auto& tr = m.truncation;
  double w = 0.0;
  for (int p = 0; p < B.phonon_dim(); ++p) {
    const auto& occ = B.phonons[p];
    const bool edge = tr.kind == Truncation::Kind::PerAtomCutoff
                          ? *std::max_element(occ.begin(), occ.end()) == tr.cutoff - 1
                          : std::accumulate(occ.begin(), occ.end(), 0) == tr.max_total_phonons();
    if (!edge) continue;
    for (int s = 0; s < B.spin_dim(); ++s) {
      const int k = B.index(s, p);
      w += rho.vec(k + D * k).real();
    }
  }
  return w;
}

CoolingCurve cooling_curve(const FullModel& m, const CoolingOptions& opt) {
  const int N = m.basis.atoms;
  std::vector<int> observed = opt.observed;
  if (observed.empty()) {
    observed.resize(N);
    std::iota(observed.begin(), observed.end(), 0);
  }
  if (opt.samples < 4) throw std::invalid_argument("cooling_curve: need at least 4 samples");
  double horizon = opt.horizon;
  if (horizon <= 0.0) {
    if (!(opt.rate_guess > 0.0)) throw std::invalid_argument("cooling_curve: need a horizon or a rate guess");
    horizon = 6.0 / opt.rate_guess;
  }

  CoolingCurve c;
  const DensityState ss = steady_state(m);
  const Observables oss = observables(m, {ss});
  c.n_ss = oss.phonons.row(0).transpose();
  c.nbar_ss = 0.0;
  for (int j : observed) c.nbar_ss += c.n_ss(j);
  c.nbar_ss /= observed.size();

  const DensityState rho0 = m.truncation.kind == Truncation::Kind::PerAtomCutoff && opt.initial.empty()
                                ? fock_product(m, std::vector<int>(N, 1))
                                : single_phonon_mixture(m, opt.initial);

  for (int pass = 0;; ++pass) {
    c.times = linspace(0.0, horizon, opt.samples);
    const Trajectory tr = propagate(m, rho0, c.times);
    const Observables o = observables(m, tr.states);
    c.phonons = o.phonons;
    c.worst = tr.worst;
    c.mean_phonons = RVec::Zero(opt.samples);
    for (int j : observed) c.mean_phonons += o.phonons.col(j);
    c.mean_phonons /= observed.size();
    std::vector<double> y(c.mean_phonons.data(), c.mean_phonons.data() + c.mean_phonons.size());
    c.fit = fit_exponential_decay(c.times, y);
    const double span = c.fit.rate * horizon;
    if (pass >= opt.horizon_refinements || (span > 3.0 && span < 30.0)) break;
    horizon = 6.0 / c.fit.rate;
  }

  // the truncated occupation itself is compressed, so judge by the weight
  // sitting on the last kept shell
  c.edge_population = edge_population(m, ss);
  if (c.edge_population > kEdgeTolerance) {
    c.reliable = false;
    std::ostringstream os;
    os << "steady state puts " << c.edge_population << " on the outermost phonon shell of "
       << m.truncation.describe();
    c.warnings.push_back(os.str());
  }
  return c;
}

CoolingCurve cooling_curve(const EmitterArray& a, const DriveField& drive, const Truncation& tr,
                           const CoolingOptions& opt) {
  return cooling_curve(build_liouvillian(a, drive, tr), opt);
}

}  // namespace subradcool
