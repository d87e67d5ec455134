#pragma once

#include <cmath>
#include <complex>

#include <Eigen/Dense>

namespace subradcool {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using CVec3 = Eigen::Matrix<std::complex<T>, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using CMat3 = Eigen::Matrix<std::complex<T>, 3, 3>;

using Polarization = CVec3<double>;

namespace polarization {
Polarization x();
Polarization y();
Polarization z();
Polarization circular();  // (x + i y)/sqrt(2)
}  // namespace polarization

// Distances in units of lambda_0 -> phase units k0 r.
inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline double to_phase(double length_in_wavelengths) { return kTwoPi * length_in_wavelengths; }

// Free-space dyadic Green's tensor at displacement r (dimensionless k*r product
// is formed internally), scaled as in the usual e^{ikr}/(4 pi k^2 r^3) form.
template <typename T>
CMat3<T> green_tensor(const Vec3<T>& r, T k) {
  using C = std::complex<T>;
  const T d = r.norm();
  if (d == T(0)) throw std::invalid_argument("green_tensor: zero displacement");
  const T kr = k * d;
  const C ikr(T(0), kr);
  const C pref = std::exp(ikr) / (T(4) * T(M_PI) * k * k * d * d * d);
  const Vec3<T> u = r / d;
  CMat3<T> out = (C(kr * kr, 0) + ikr - C(1, 0)) * Mat3<T>::Identity().template cast<C>();
  out += (C(-kr * kr, 0) - T(3) * ikr + C(3, 0)) * (u * u.transpose()).template cast<C>();
  return pref * out;
}

// Scalar coupling G = J - i gamma/2 between two dipoles with polarization p at
// displacement r (phase units), with its gradient and Hessian in r.
template <typename T>
struct CouplingJet {
  std::complex<T> value;
  CVec3<T> gradient;
  CMat3<T> hessian;
};

namespace detail {

// e^{ir} g(r) and its first two derivatives for g = sum c_n r^{-n}.
template <typename T>
struct RadialPart {
  std::complex<T> f, df, d2f;
};

template <typename T>
RadialPart<T> radial(T r, const std::complex<T>* coef, int nmin, int nmax) {
  using C = std::complex<T>;
  C g(0), dg(0), d2g(0);
  for (int n = nmin; n <= nmax; ++n) {
    const C c = coef[n - nmin];
    const T rn = std::pow(r, -n);
    g += c * rn;
    dg += c * T(-n) * rn / r;
    d2g += c * T(n * (n + 1)) * rn / (r * r);
  }
  const C e = std::exp(C(T(0), r));
  const C i(T(0), T(1));
  return {e * g, e * (i * g + dg), e * (-g + T(2) * i * dg + d2g)};
}

}  // namespace detail

// r is a displacement in phase units (k0 = 1), p a unit complex polarization.
template <typename T>
CouplingJet<T> coupling_jet(const Vec3<T>& r, const CVec3<T>& p) {
  using C = std::complex<T>;
  const T d = r.norm();
  if (d == T(0)) throw std::invalid_argument("coupling_jet: zero displacement");
  const C i(T(0), T(1));
  // transverse part: (r^2 + i r - 1)/r^3, longitudinal: (-r^2 - 3 i r + 3)/r^5
  const C cu[3] = {C(1), i, C(-1)};
  const C cw[3] = {C(-1), T(-3) * i, C(3)};
  const auto U = detail::radial<T>(d, cu, 1, 3);
  const auto W = detail::radial<T>(d, cw, 3, 5);
  const T c = T(-3) / T(4);
  // p^dagger (r r^T) p = r^T S r with S = Re(conj(p) p^T)
  const Mat3<T> S = (p.conjugate() * p.transpose()).real();
  const T pp = p.squaredNorm();
  const Vec3<T> u = r / d;
  const Vec3<T> Sr = S * r;
  const T q = r.dot(Sr);
  const Mat3<T> Id = Mat3<T>::Identity();
  const Mat3<T> P = u * u.transpose();

  CouplingJet<T> jet;
  jet.value = c * (pp * U.f + q * W.f);
  jet.gradient = c * ((pp * U.df + q * W.df) * u.template cast<C>() + T(2) * W.f * Sr.template cast<C>());
  const Mat3<T> cross = u * Sr.transpose() + Sr * u.transpose();
  jet.hessian = c * ((pp * U.d2f + q * W.d2f) * P.template cast<C>() +
                     (pp * U.df + q * W.df) / d * (Id - P).template cast<C>() +
                     T(2) * W.df * cross.template cast<C>() + T(2) * W.f * S.template cast<C>());
  return jet;
}

// Coincident-position limits: G(0) = -i/2, gradient 0, Hessian from the small-r
// expansion of the dissipative part (the coherent part is dropped).
template <typename T>
CMat3<T> self_hessian(const CVec3<T>& p) {
  using C = std::complex<T>;
  // gamma(r) = 1 - pp r^2/5 + r^T S r/10 + O(r^4)
  const Mat3<T> S = (p.conjugate() * p.transpose()).real();
  const T pp = p.squaredNorm();
  const T c_t = T(3) / T(2) * (T(-2) / T(15)) * T(2);  // transverse curvature
  const T c_l = T(3) / T(2) * (T(1) / T(15)) * T(2);   // longitudinal curvature
  const Mat3<T> gamma2 = c_t * pp * Mat3<T>::Identity() + c_l * S;
  return C(T(0), T(-0.5)) * gamma2.template cast<C>();
}

struct DipoleCoupling {
  std::complex<double> G;
  double J() const { return G.real(); }
  double gamma() const { return -2.0 * G.imag(); }
};

// Positions in units of lambda_0.
DipoleCoupling coupling(const Vec3<double>& ri, const Vec3<double>& rj, const Polarization& p);
std::complex<double> coupling_derivative(const Vec3<double>& ri, const Vec3<double>& rj,
                                         const Polarization& p, const Vec3<double>& axis);
std::complex<double> coupling_second_derivative(const Vec3<double>& ri, const Vec3<double>& rj,
                                                const Polarization& p, const Vec3<double>& axis_a,
                                                const Vec3<double>& axis_b);

// Value, gradient and Hessian for the pair, coincident positions included.
CouplingJet<double> pair_jet(const Vec3<double>& ri, const Vec3<double>& rj, const Polarization& p);

}  // namespace subradcool
