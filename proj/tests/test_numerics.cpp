#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <random>

#include "subradcool/numerics.hpp"

using namespace subradcool;

namespace {

CMat random_matrix(int n, unsigned seed, double scale = 1.0) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d;
  CMat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = scale * cplx(d(rng), d(rng));
  return A;
}

}  // namespace

TEST_CASE("eig_general reproduces a triangular spectrum and satisfies A V = V D") {
  CMat A = CMat::Zero(4, 4);
  A.diagonal() << cplx(3, -1), cplx(-2, 0.5), cplx(1, 0), cplx(-2, -0.5);
  A(0, 1) = 0.3;
  A(1, 3) = cplx(0, 0.7);
  A(2, 3) = -1.1;
  const auto e = eig_general(A);
  REQUIRE(e.values.size() == 4);
  CHECK(std::abs(e.values(0) - cplx(-2, -0.5)) < 1e-12);
  CHECK(std::abs(e.values(1) - cplx(-2, 0.5)) < 1e-12);
  CHECK(std::abs(e.values(2) - cplx(1, 0)) < 1e-12);
  CHECK(std::abs(e.values(3) - cplx(3, -1)) < 1e-12);
  CHECK((A * e.vectors - e.vectors * e.values.asDiagonal()).norm() < 1e-12);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(e.vectors.col(k).norm() - 1.0) < 1e-12);
}

TEST_CASE("eig_general rebases a degenerate complex-symmetric cluster") {
  // symmetric with a doubly degenerate eigenvalue: diag(1,1,2) rotated by a real orthogonal Q
  Eigen::Matrix3d Q = Eigen::AngleAxisd(0.4, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  CMat D = CMat::Zero(3, 3);
  D.diagonal() << cplx(1, -0.5), cplx(1, -0.5), cplx(2, -1);
  const CMat A = Q.cast<cplx>() * D * Q.transpose().cast<cplx>();
  const auto e = eig_general(A);
  for (int k = 0; k < 3; ++k) {
    const cplx vtv = e.vectors.col(k).cwiseProduct(e.vectors.col(k)).sum();
    CHECK(std::abs(vtv) > 1e-3);
  }
  // distinct members of the cluster are transpose-orthogonal
  const cplx cross = e.vectors.col(0).cwiseProduct(e.vectors.col(1)).sum();
  CHECK(std::abs(cross) < 1e-10);
  CHECK((A * e.vectors - e.vectors * e.values.asDiagonal()).norm() < 1e-12);
}

TEST_CASE("solve_linear solves well-posed systems and rejects singular ones") {
  const CMat A = random_matrix(6, 1) + 6.0 * CMat::Identity(6, 6);
  const CVec b = random_matrix(6, 2).col(0);
  const CVec x = solve_linear(A, b);
  CHECK((A * x - b).norm() < 1e-12 * b.norm());

  CMat S = CMat::Zero(3, 3);
  S(0, 0) = 1.0;
  S(1, 1) = 2.0;
  CHECK_THROWS_AS(solve_linear(S, CVec::Ones(3)), NumericalError);
}

TEST_CASE("dense expm_action matches Eigen's matrix exponential") {
  const CMat L = random_matrix(12, 3, 0.5);
  const CVec v = random_matrix(12, 4).col(0);
  const CVec ref = (L * 0.7).exp() * v;
  CHECK((expm_action(L, v, 0.7) - ref).norm() < 1e-10 * ref.norm());
}

TEST_CASE("Krylov action on a sparse dissipative generator matches the dense exponential") {
  const int n = 300;
  std::vector<Eigen::Triplet<cplx>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, cplx(-0.5 - 0.01 * i, 0.3 * std::sin(i)));
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, cplx(0.2, 0.1));
      t.emplace_back(i + 1, i, cplx(-0.2, 0.1));
    }
  }
  SpMat L(n, n);
  L.setFromTriplets(t.begin(), t.end());
  CVec v = CVec::Zero(n);
  v(0) = 1.0;
  v(n / 2) = cplx(0, 1);
  const CVec ref = (CMat(L) * 3.0).exp() * v;
  const CVec got = krylov_expm_action(L, v, 3.0, 1e-10);
  CHECK((got - ref).norm() < 1e-8 * ref.norm());
  CHECK((expm_action(L, v, 3.0) - ref).norm() < 1e-8 * ref.norm());
}

TEST_CASE("adaptive ODE integration of a damped oscillator") {
  const double w = 2.0, g = 0.3;
  LinearRhs rhs = [&](double, const CVec& y, CVec& dy) { dy = cplx(-g, -w) * y; };
  const std::vector<double> times{0.0, 0.5, 1.0, 4.0};
  const auto ys = integrate_linear_ode(rhs, CVec::Ones(1), times);
  REQUIRE(ys.size() == times.size());
  for (size_t k = 0; k < times.size(); ++k)
    CHECK(std::abs(ys[k](0) - std::exp(cplx(-g, -w) * times[k])) < 1e-7);
}

TEST_CASE("adaptive ODE integration agrees with the exponential for a coupled system") {
  const CMat A = random_matrix(5, 7, 0.4) - 1.0 * CMat::Identity(5, 5);
  LinearRhs rhs = [&](double, const CVec& y, CVec& dy) { dy = A * y; };
  const CVec y0 = random_matrix(5, 8).col(0);
  const auto ys = integrate_linear_ode(rhs, y0, {0.0, 2.0});
  const CVec ref = (A * 2.0).exp() * y0;
  CHECK((ys[1] - ref).norm() < 1e-7 * ref.norm());
}

TEST_CASE("exponential fit recovers exact parameters") {
  const auto t = linspace(0.0, 10.0, 50);
  std::vector<double> y;
  for (double x : t) y.push_back(0.8 * std::exp(-0.45 * x) + 0.05);
  const auto f = fit_exponential_decay(t, y);
  CHECK(f.rate == doctest::Approx(0.45).epsilon(1e-8));
  CHECK(f.amplitude == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(f.asymptote == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(f.residual < 1e-10);
}

TEST_CASE("exponential fit tolerates mild noise") {
  std::mt19937 rng(11);
  std::normal_distribution<double> noise(0.0, 1e-3);
  const auto t = linspace(0.0, 20.0, 200);
  std::vector<double> y;
  for (double x : t) y.push_back(std::exp(-0.3 * x) + 0.1 + noise(rng));
  const auto f = fit_exponential_decay(t, y);
  CHECK(f.rate == doctest::Approx(0.3).epsilon(0.02));
  CHECK(f.asymptote == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("grids include both endpoints") {
  const auto a = linspace(1.0, 2.0, 5);
  REQUIRE(a.size() == 5);
  CHECK(a.front() == 1.0);
  CHECK(a.back() == 2.0);
  CHECK(a[2] == doctest::Approx(1.5));
  const auto b = logspace(-7, 0, 12);
  REQUIRE(b.size() == 12);
  CHECK(b.front() == doctest::Approx(1e-7));
  CHECK(b.back() == doctest::Approx(1.0));
  CHECK(b[1] / b[0] == doctest::Approx(std::pow(10.0, 7.0 / 11.0)));
}
