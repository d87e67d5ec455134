#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "subradcool/baselines.hpp"
#include "subradcool/motion.hpp"

using namespace subradcool;

namespace {

EmitterArray chain(int n, double d, double nu_bar, double delta_nu = 0.0) {
  EmitterArray a;
  a.trap_frequencies.resize(n, 1);
  for (int j = 0; j < n; ++j) {
    a.positions.emplace_back(d * j, 0, 0);
    a.trap_frequencies(j, 0) = nu_bar + delta_nu * (j - n / 2);
  }
  a.detuning_offsets = RVec::Zero(n);
  return a;
}

EmitterArray single(double nu) {
  EmitterArray a;
  a.positions = {Vec3d(0, 0, 0)};
  a.trap_frequencies = RMat::Constant(1, 1, nu);
  return a;
}

DriveField drive(double rabi, double detuning) {
  DriveField d;
  d.rabi = rabi;
  d.detuning = detuning;
  return d;
}

}  // namespace

TEST_CASE("single atom: effective steady state equals the independent-atom closed form") {
  for (double nu : {0.05, 0.5, 4.0, 20.0}) {
    const double det = independent_optimal_detuning(nu);
    const auto e = solve_effective(single(nu), drive(1e-3, det));
    const auto ref = n_independent(nu, det, 1e-3, 0.02);
    CHECK(std::abs(e.nbar - ref.nbar) <= 1e-10 * ref.nbar);
    CHECK(-2.0 * stability_margin(e.rates) == doctest::Approx(ref.rate).epsilon(1e-10));
  }
}

TEST_CASE("zeroed dipole couplings reproduce independent atoms at each trap frequency") {
  const EmitterArray a = chain(3, 0.2, 5.0, 0.7);
  const DriveField d = drive(1e-3, -5.2);
  SpinContext ctx = make_spin_context(a, d);
  for (auto* m : {&ctx.tables.G, &ctx.tables.d1[0], &ctx.tables.d2[0][0]}) {
    const CVec diag = m->diagonal();
    m->setZero();
    m->diagonal() = diag;
  }
  ctx.steady = steady_displacements(a, d, ctx.tables);
  ctx.spectrum = collective_modes(spin_hamiltonian(ctx.tables, a.lamb_dicke(), a.detuning_offsets, d.detuning), d.detuning);
  const auto rates = rates_perpendicular(ctx);
  const RVec n = steady_state_moments(rates).populations();
  for (int j = 0; j < 3; ++j) {
    const double ref = n_independent(a.trap_frequencies(j, 0), d.detuning, d.rabi, a.lamb_dicke()(j, 0)).nbar;
    CHECK(std::abs(n(j) - ref) <= 1e-10 * ref);
  }
  RMat offdiag = rates.V.cwiseAbs();
  offdiag.diagonal().setZero();
  CHECK(offdiag.maxCoeff() < 1e-18);
}

TEST_CASE("resolved and Doppler limits of the effective model") {
  const double hi = 100.0, lo = 0.01;
  CHECK(solve_effective(single(hi), drive(1e-3, independent_optimal_detuning(hi))).nbar ==
        doctest::Approx(13.0 / (80.0 * hi * hi)).epsilon(0.02));
  CHECK(solve_effective(single(lo), drive(1e-3, independent_optimal_detuning(lo))).nbar ==
        doctest::Approx(7.0 / (20.0 * lo)).epsilon(0.02));
}

TEST_CASE("rate matrices are Hermitian and the general form reduces to the perpendicular one") {
  const EmitterArray a = chain(4, 0.15, 20.0, 1e-3);
  const auto ctx = make_spin_context(a, drive(1e-3, -21.0));
  const auto p = rates_perpendicular(ctx), g = rates_general(ctx);
  CHECK(p.hermiticity_error() < 1e-14);
  CHECK(g.hermiticity_error() < 1e-14);
  const double scale = p.Rm.cwiseAbs().maxCoeff();
  CHECK((p.Rm - g.Rm).cwiseAbs().maxCoeff() < 1e-9 * scale);
  CHECK((p.Rp - g.Rp).cwiseAbs().maxCoeff() < 1e-9 * scale);
  CHECK((p.V - g.V).cwiseAbs().maxCoeff() < 1e-9 * std::max(scale, p.V.cwiseAbs().maxCoeff()));
}

TEST_CASE("the perpendicular form refuses a longitudinal dipole force") {
  EmitterArray a = chain(2, 0.2, 20.0);
  a.motion_axes = {Vec3d(1, 0, 0)};
  const auto ctx = make_spin_context(a, drive(1e-3, -20.0));
  CHECK_THROWS_AS(rates_perpendicular(ctx), std::invalid_argument);
  CHECK_NOTHROW(rates_general(ctx));
}

TEST_CASE("multi-axis rates: motion along y decouples from z for a chain on x driven along z") {
  EmitterArray a = chain(2, 0.2, 20.0, 1e-3);
  a.motion_axes = {Vec3d(0, 1, 0), Vec3d(0, 0, 1)};
  a.trap_frequencies = RMat::Constant(2, 2, 20.0);
  a.trap_frequencies(1, 0) = a.trap_frequencies(1, 1) = 20.001;
  const DriveField d = drive(1e-3, -20.4);
  const auto m = rates_multi_axis(make_spin_context(a, d));
  REQUIRE(m.size() == 4);
  const double scale = m.Rm.cwiseAbs().maxCoeff();
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q)
      if (m.modes[p].second != m.modes[q].second) {
        CHECK(std::abs(m.V(p, q)) < 1e-12 * scale);
        CHECK(std::abs(m.Rm(p, q)) < 1e-12 * scale);
        CHECK(std::abs(m.Rp(p, q)) < 1e-12 * scale);
      }
  std::vector<int> yi, zi;
  for (int p = 0; p < 4; ++p) (m.modes[p].second == 0 ? yi : zi).push_back(p);
  REQUIRE(zi.size() == 2);

  // the z block agrees with a single-axis run up to Lamb-Dicke corrections from y
  EmitterArray az = a;
  az.motion_axes = {Vec3d(0, 0, 1)};
  az.trap_frequencies = a.trap_frequencies.col(1);
  const auto one = rates_perpendicular(make_spin_context(az, d));
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q)
      CHECK(std::abs(m.Rm(zi[p], zi[q]) - one.Rm(p, q)) < 5 * 0.02 * 0.02 * one.Rm.cwiseAbs().maxCoeff());
}

TEST_CASE("single-mode cooling: collective modes decouple and match the two-mode closed forms") {
  EmitterArray a = chain(2, 0.2, 20.0, 0.0);
  const auto t = two_atom_predictions(0.2, polarization::y(), 0.02, 20.0);
  const auto e = solve_effective(a, drive(1e-3, t.optimal_detuning));
  Eigen::Matrix2cd U;
  U << 1, 1, 1, -1;
  U /= std::sqrt(2.0);
  const CMat Mc = U.adjoint() * e.steady.M * U;  // (S, A) basis
  CHECK(std::abs(Mc(0, 1)) < 1e-3 * std::abs(Mc(1, 1)));
  CHECK(Mc(1, 1).real() == doctest::Approx(t.n_A).epsilon(0.2));
}

TEST_CASE("moment evolution: adaptive integration, closed form and steady state agree") {
  const EmitterArray a = chain(2, 0.2, 0.25, 1e-3);
  const auto e = solve_effective(a, drive(0.05, -0.67));
  const CMat M0 = CMat::Identity(2, 2);
  const std::vector<double> early{0.0, 10.0, 200.0};
  const auto ode = evolve_moments(e.rates, M0, early);
  const auto exact = propagate_moments(e.rates, M0, early);
  for (size_t k = 0; k < early.size(); ++k) CHECK((ode[k].M - exact[k].M).cwiseAbs().maxCoeff() < 1e-7);
  const double rate = -2.0 * stability_margin(e.rates);
  const auto late = propagate_moments(e.rates, M0, {40.0 / rate});
  CHECK(late[0].mean_population() == doctest::Approx(e.nbar).epsilon(1e-6));
  CHECK(exact[0].mean_population() == doctest::Approx(1.0));
}

TEST_CASE("moment evolution validates the initial matrix") {
  const auto e = solve_effective(single(1.0), drive(1e-3, -1.1));
  CHECK_THROWS_AS(evolve_moments(e.rates, CMat::Constant(1, 1, cplx(-1.0, 0)), {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(evolve_moments(e.rates, CMat::Identity(2, 2), {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("blue-detuned drive raises a heating error") {
  CHECK_THROWS_AS(solve_effective(single(5.0), drive(1e-3, 5.0)), HeatingError);
}

TEST_CASE("sideband detuning and cooling-mode selection") {
  CHECK(sideband_detuning(0.0, 1.0, 20.0) == doctest::Approx(-std::sqrt(400.25)));
  const EmitterArray a = chain(2, 0.2, 20.0, 1e-3);
  const auto mc = select_cooling_mode(a, drive(1e-3, 0.0));
  REQUIRE(mc.mode >= 0);
  double best = INFINITY;
  for (double n : mc.candidate_nbar)
    if (std::isfinite(n)) best = std::min(best, n);
  CHECK(mc.nbar == best);
  // the subradiant pair mode wins over the superradiant one
  const auto t = two_atom_predictions(0.2, polarization::y(), 0.02, 20.0);
  // the mode search keeps Lamb-Dicke shifts that the closed form drops
  CHECK(mc.detuning == doctest::Approx(t.optimal_detuning).epsilon(1e-4));
}

TEST_CASE("two-atom array cooling: frozen occupation ratio") {
  // d = 0.2, nu = 20, delta_nu = 1e-3, Omega = 1e-3 on the antisymmetric sideband
  const EmitterArray a = chain(2, 0.2, 20.0, 1e-3);
  const auto t = two_atom_predictions(0.2, polarization::y(), 0.02, 20.0);
  const auto e = solve_effective(a, drive(1e-3, t.optimal_detuning));
  const double n_ind = n_independent(20.0, independent_optimal_detuning(20.0), 1e-3, 0.02).nbar;
  CHECK(e.nbar / n_ind == doctest::Approx(0.5002904053).epsilon(1e-8));
  CHECK(e.nbar / n_ind == doctest::Approx(t.ratio_resolved).epsilon(0.25));
}

TEST_CASE("rate-model names") {
  CHECK(parse_rate_model("auto") == RateModel::Auto);
  CHECK(parse_rate_model("perpendicular") == RateModel::Perpendicular);
  CHECK_THROWS_AS(parse_rate_model("eq17"), std::invalid_argument);
}
