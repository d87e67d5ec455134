#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "subradcool/spin_system.hpp"

using namespace subradcool;

namespace {

EmitterArray pair_array(double d, const Polarization& p = polarization::y(), double nu = 20.0, double eta = 0.02) {
  EmitterArray a;
  a.positions = {Vec3d(0, 0, 0), Vec3d(d, 0, 0)};
  a.polarization = p;
  a.trap_frequencies = RMat::Constant(2, 1, nu);
  a.detuning_offsets = RVec::Zero(2);
  a.eta = eta;
  return a;
}

EmitterArray chain(int n, double d) {
  EmitterArray a;
  for (int j = 0; j < n; ++j) a.positions.emplace_back(d * j, 0, 0);
  a.trap_frequencies = RMat::Constant(n, 1, 20.0);
  a.detuning_offsets = RVec::Zero(n);
  return a;
}

}  // namespace

TEST_CASE("Lamb-Dicke parameters scale with the inverse root of the trap frequency") {
  EmitterArray a = pair_array(0.2);
  a.trap_frequencies(0, 0) = 10.0;
  a.trap_frequencies(1, 0) = 30.0;
  const RMat eta = a.lamb_dicke();
  CHECK(eta(0, 0) == doctest::Approx(0.02 * std::sqrt(2.0)));
  CHECK(eta(1, 0) == doctest::Approx(0.02 * std::sqrt(20.0 / 30.0)));
  CHECK(a.recoil_frequency() == doctest::Approx(0.02 * 0.02 * 20.0));
}

TEST_CASE("array validation rejects malformed input") {
  EmitterArray a = pair_array(0.2);
  a.positions[1] = a.positions[0];
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = pair_array(0.2);
  a.trap_frequencies(1, 0) = -1.0;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = pair_array(0.2);
  a.motion_axes = {Vec3d(1, 1, 0)};
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = pair_array(0.2);
  a.detuning_offsets = RVec::Zero(3);
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
}

TEST_CASE("drive phase follows the propagation direction") {
  const EmitterArray a = pair_array(0.25);
  DriveField d;
  d.rabi = 0.1;
  d.direction = Vec3d(1, 0, 0);
  const CVec w = d.rabi_at(a);
  CHECK(std::abs(w(0) - cplx(0.1, 0)) < 1e-15);
  CHECK(std::abs(w(1) - cplx(0, 0.1)) < 1e-15);  // quarter wavelength
  const Vec3d x(1, 0, 0), z(0, 0, 1);
  CHECK(std::abs(d.rabi_gradient(a, x)(1) - I1 * w(1)) < 1e-15);
  CHECK(std::abs(d.rabi_gradient(a, z)(1)) == 0.0);
  CHECK(std::abs(d.rabi_curvature(a, x, x)(0) + 0.1) < 1e-15);
}

TEST_CASE("coupling tables: G(0) on the diagonal, reciprocity, antisymmetric gradient") {
  const auto g = coupling_tables(chain(4, 0.17));
  for (int i = 0; i < 4; ++i) CHECK(g.G(i, i) == cplx(0, -0.5));
  CHECK((g.G - g.G.transpose()).norm() < 1e-14);
  CHECK((g.d1[0] + g.d1[0].transpose()).norm() < 1e-14);
  CHECK((g.d2[0][0] - g.d2[0][0].transpose()).norm() < 1e-14);
  // motion along z is transverse to a chain on x: the first derivative vanishes
  CHECK(g.d1[0].cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("two-atom collective modes are symmetric and antisymmetric") {
  EmitterArray a = pair_array(0.2);
  a.eta = 0.0;
  const auto g = coupling_tables(a);
  const CMat H = spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, 0.0);
  const auto sp = collective_modes(H, 0.0);
  const cplx G12 = g.G(0, 1);
  // eigenvalues G(0) +- G12
  const cplx e_plus = cplx(0, -0.5) + G12, e_minus = cplx(0, -0.5) - G12;
  const bool order = std::abs(sp.eps(0) - e_minus) < std::abs(sp.eps(0) - e_plus);
  CHECK(std::abs(sp.eps(order ? 0 : 1) - e_minus) < 1e-13);
  CHECK(std::abs(sp.eps(order ? 1 : 0) - e_plus) < 1e-13);
  CHECK(sp.completeness_error() < 1e-12);
  // linewidths 1 -+ gamma12, shifts +-J12
  const double gam12 = -2 * G12.imag();
  const double lw_min = std::min(sp.linewidth(0), sp.linewidth(1));
  CHECK(lw_min == doctest::Approx(1.0 - gam12).epsilon(1e-12));
}

TEST_CASE("collective spectrum shifts rigidly with the detuning") {
  const EmitterArray a = chain(5, 0.2);
  const auto g = coupling_tables(a);
  const auto s0 = collective_modes(spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, 0.0), 0.0);
  const auto s1 = collective_modes(spin_hamiltonian(g, a.lamb_dicke(), a.detuning_offsets, -3.5), -3.5);
  for (int l = 0; l < 5; ++l) {
    CHECK(s1.shift(l) == doctest::Approx(s0.shift(l)).epsilon(1e-12));
    CHECK(s1.linewidth(l) == doctest::Approx(s0.linewidth(l)).epsilon(1e-12));
  }
  // completeness: sum over modes of c_i phi_j = delta_ij
  CHECK(s0.completeness_error() < 1e-10);
}

TEST_CASE("single-atom Hamiltonian is the bare self coupling") {
  EmitterArray a;
  a.positions = {Vec3d(0, 0, 0)};
  a.trap_frequencies = RMat::Constant(1, 1, 20.0);
  const CMat H = build_spin_hamiltonian(a, DriveField{});
  CHECK(std::abs(H(0, 0) - cplx(0, -0.5)) < 1e-15);
}

TEST_CASE("main-text and appendix Hamiltonians differ only at Lamb-Dicke order") {
  const EmitterArray a = chain(3, 0.15);
  DriveField d;
  d.detuning = -20.0;
  const CMat Hm = build_spin_hamiltonian(a, d, Convention::MainText);
  const CMat Hb = build_spin_hamiltonian(a, d, Convention::AppendixB);
  const double diff = (Hm - Hb).cwiseAbs().maxCoeff();
  CHECK(diff > 0.0);
  CHECK(diff < 10 * a.eta * a.eta);
  CHECK(parse_convention("appendix-B") == Convention::AppendixB);
  CHECK(to_string(Convention::MainText) == "main-text");
  CHECK_THROWS_AS(parse_convention("eq17"), std::invalid_argument);
}

TEST_CASE("weak-drive steady state solves the linear response") {
  const EmitterArray a = chain(4, 0.2);
  DriveField d;
  d.rabi = 1e-3;
  d.detuning = -1.0;
  const auto g = coupling_tables(a);
  const auto st = steady_displacements(a, d, g);
  CMat A = g.G;
  A.diagonal().array() -= d.detuning;
  CHECK((A * st.s + d.rabi_at(a)).norm() < 1e-15);
  CHECK(st.warnings.empty());
  // z-drive has no gradient along x-separated pairs beyond the phase: beta stays tiny
  CHECK(st.beta.cwiseAbs().maxCoeff() < 1e-6);

  d.rabi = 0.5;
  d.detuning = 0.0;
  CHECK_FALSE(steady_displacements(a, d, g).warnings.empty());
}

TEST_CASE("single atom amplitude matches the Lorentzian response") {
  EmitterArray a;
  a.positions = {Vec3d(0, 0, 0)};
  a.trap_frequencies = RMat::Constant(1, 1, 20.0);
  DriveField d;
  d.rabi = 1e-3;
  d.detuning = -2.0;
  const auto st = steady_displacements(a, d);
  // s = -Omega / (-Delta - i/2)
  CHECK(std::abs(st.s(0) - (-1e-3 / cplx(2.0, -0.5))) < 1e-16);
}

TEST_CASE("ring target: reduced parameters and the dark detuning") {
  // 7 ring atoms at radius 0.2 plus the target at the center (index 7)
  EmitterArray a;
  const int n = 7;
  for (int j = 0; j < n; ++j) {
    const double phi = 2 * M_PI * j / n;
    a.positions.emplace_back(0.2 * std::cos(phi), 0.2 * std::sin(phi), 0.0);
  }
  a.positions.emplace_back(0, 0, 0);
  a.polarization = polarization::circular();
  a.trap_frequencies = RMat::Constant(n + 1, 1, 50.0);
  RVec eta = RVec::Zero(n + 1);
  eta(n) = 0.02;
  const auto p = ring_target_parameters(a, n, eta);
  CHECK(p.ring_size == n);
  // bright-combination coupling: sqrt(N) times the pair coupling
  const CMat Gt = spin_hamiltonian(coupling_tables(a), RMat(eta), RVec(), 0.0);
  CHECK(p.J_tS == doctest::Approx(std::sqrt(7.0) * Gt(0, n).real()).epsilon(1e-12));
  CHECK(p.Gamma_tS == doctest::Approx(-2.0 * std::sqrt(7.0) * Gt(0, n).imag()).epsilon(1e-12));
  CHECK(p.gamma_t == doctest::Approx(-2.0 * Gt(n, n).imag()).epsilon(1e-14));
  const double dark = dark_detuning(p);
  const auto m0 = collective_modes(ring_target_hamiltonian(p, 0.0, 0.0), 0.0);
  const auto md = collective_modes(ring_target_hamiltonian(p, 0.0, dark), 0.0);
  const double g0 = std::min(m0.linewidth(0), m0.linewidth(1));
  const double gd = std::min(md.linewidth(0), md.linewidth(1));
  CHECK(gd < g0);
  CHECK(gd > 0.0);
}
