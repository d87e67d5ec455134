#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>

#include "subradcool/green.hpp"

using namespace subradcool;
using cplx = std::complex<double>;

namespace {

const std::array<Polarization, 4> kPresets{polarization::x(), polarization::y(), polarization::z(),
                                           polarization::circular()};

// Closed form for a transverse pair (polarization perpendicular to the separation).
cplx transverse(double r) {
  const cplx i(0, 1);
  return -0.75 * std::exp(i * r) * (1.0 / r + i / (r * r) - 1.0 / (r * r * r));
}

// Closed form for a longitudinal pair.
cplx longitudinal(double r) {
  const cplx i(0, 1);
  return 1.5 * std::exp(i * r) * (i / (r * r) - 1.0 / (r * r * r));
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("pair coupling matches the transverse and longitudinal closed forms") {
  for (double kd : {0.3, 1.0, 2.7, 9.0, 20.0}) {
    const double d = kd / kTwoPi;
    const Vec3<double> o(0, 0, 0), rx(d, 0, 0);
    CHECK(rel(coupling(o, rx, polarization::y()).G, transverse(kd)) < 1e-13);
    CHECK(rel(coupling(o, rx, polarization::z()).G, transverse(kd)) < 1e-13);
    CHECK(rel(coupling(o, rx, polarization::x()).G, longitudinal(kd)) < 1e-13);
    // circular in the xy plane mixes the two equally
    CHECK(rel(coupling(o, rx, polarization::circular()).G, 0.5 * (transverse(kd) + longitudinal(kd))) < 1e-13);
  }
}

TEST_CASE("coupling equals -3 pi p^dag G p for the dyadic Green's tensor") {
  const Vec3<double> r(0.7, -1.3, 0.4);
  for (const auto& p : kPresets) {
    const cplx ref = -3.0 * M_PI * (p.adjoint() * green_tensor<double>(r, 1.0) * p)(0, 0);
    CHECK(rel(coupling_jet<double>(r, p).value, ref) < 1e-13);
  }
}

TEST_CASE("coincident limit: G(0) = -i/2 and the self curvature") {
  const Vec3<double> o(0, 0, 0);
  CHECK(coupling(o, o, polarization::y()).G == cplx(0, -0.5));
  const Vec3<double> x(1, 0, 0), y(0, 1, 0), z(0, 0, 1);
  // gamma(r) = 1 - r^2/5 transverse, 1 - r^2/10 along the dipole
  const auto gpp = [&](const Polarization& p, const Vec3<double>& a) {
    return -2.0 * coupling_second_derivative(o, o, p, a, a).imag();
  };
  CHECK(std::abs(gpp(polarization::y(), z) - (-0.4)) < 1e-12);
  CHECK(std::abs(gpp(polarization::y(), x) - (-0.4)) < 1e-12);
  CHECK(std::abs(gpp(polarization::y(), y) - (-0.2)) < 1e-12);
  CHECK(std::abs(coupling_second_derivative(o, o, polarization::y(), x, z)) < 1e-15);
  CHECK(std::abs(coupling_derivative(o, o, polarization::y(), z)) == 0.0);
}

TEST_CASE("self curvature agrees with the small-separation limit of the pair rate") {
  // gamma_pair(h) = 1 + gamma''/2 h^2 + O(h^4); fit the quadratic coefficient
  const Vec3<double> o(0, 0, 0);
  for (const auto& p : kPresets)
    for (int ax = 0; ax < 3; ++ax) {
      Vec3<double> a = Vec3<double>::Zero();
      a(ax) = 1.0;
      const auto gam = [&](double h) { return -2.0 * coupling(o, (h / kTwoPi) * a, p).G.imag(); };
      const double h1 = 0.1, h2 = 0.05;
      const double c1 = (gam(h1) - 1.0) / (h1 * h1), c2 = (gam(h2) - 1.0) / (h2 * h2);
      const double limit = (4.0 * c2 - c1) / 3.0;  // Richardson in h^2
      const double analytic = -coupling_second_derivative(o, o, p, a, a).imag();
      CHECK(std::abs(limit - analytic) < 1e-5);
    }
}

TEST_CASE("analytic gradient and Hessian agree with central differences") {
  const std::array<Vec3<double>, 3> dirs{Vec3<double>(1, 0, 0), Vec3<double>(0.6, 0.8, 0),
                                         Vec3<double>(0.2, -0.3, 0.9327379053)};
  double worst = 0.0;
  for (const auto& p : kPresets)
    for (const auto& u : dirs)
      for (double kd : {0.3, 0.7, 1.5, 3.0, 6.0, 11.0, 20.0}) {
        const Vec3<double> r = kd * u.normalized();
        const auto jet = coupling_jet<double>(r, p);
        const double h = 1e-3 * kd;
        for (int a = 0; a < 3; ++a) {
          Vec3<double> e = Vec3<double>::Zero();
          e(a) = h;
          // fourth-order central stencil
          const auto j1p = coupling_jet<double>(r + e, p), j1m = coupling_jet<double>(r - e, p);
          const auto j2p = coupling_jet<double>(r + 2 * e, p), j2m = coupling_jet<double>(r - 2 * e, p);
          const cplx fd = (8.0 * (j1p.value - j1m.value) - (j2p.value - j2m.value)) / (12 * h);
          const double scale = std::max(std::abs(jet.gradient(a)), 1e-3 * jet.gradient.norm());
          worst = std::max(worst, std::abs(fd - jet.gradient(a)) / scale);
          for (int b = 0; b < 3; ++b) {
            const cplx fd2 = (8.0 * (j1p.gradient(b) - j1m.gradient(b)) - (j2p.gradient(b) - j2m.gradient(b))) / (12 * h);
            const double s2 = std::max(std::abs(jet.hessian(a, b)), 1e-3 * jet.hessian.norm());
            worst = std::max(worst, std::abs(fd2 - jet.hessian(a, b)) / s2);
          }
        }
      }
  CHECK(worst < 1e-6);
}

TEST_CASE("Hessian is symmetric and coupling is reciprocal") {
  const Vec3<double> ri(0.1, 0.2, -0.05), rj(-0.15, 0.05, 0.1);
  for (const auto& p : kPresets) {
    const auto jet = pair_jet(ri, rj, p);
    CHECK((jet.hessian - jet.hessian.transpose()).norm() < 1e-14 * jet.hessian.norm());
    CHECK(std::abs(coupling(ri, rj, p).G - coupling(rj, ri, p).G) < 1e-15);
    const Vec3<double> z(0, 0, 1);
    CHECK(std::abs(coupling_derivative(ri, rj, p, z) + coupling_derivative(rj, ri, p, z)) < 1e-14);
  }
}

TEST_CASE("zero displacement is rejected by the pair kernels") {
  CHECK_THROWS_AS(green_tensor<double>(Vec3<double>::Zero(), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(coupling_jet<double>(Vec3<double>::Zero(), polarization::y()), std::invalid_argument);
}
