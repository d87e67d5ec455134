#include "subradcool/green.hpp"

namespace subradcool {

namespace polarization {
Polarization x() { return Polarization(1, 0, 0); }
Polarization y() { return Polarization(0, 1, 0); }
Polarization z() { return Polarization(0, 0, 1); }
Polarization circular() {
  const double s = 1.0 / std::sqrt(2.0);
  return Polarization(s, std::complex<double>(0, s), 0);
}
}  // namespace polarization

CouplingJet<double> pair_jet(const Vec3<double>& ri, const Vec3<double>& rj, const Polarization& p) {
  const Vec3<double> r = kTwoPi * (ri - rj);
  if (r.squaredNorm() == 0.0) {
    CouplingJet<double> self;
    self.value = std::complex<double>(0.0, -0.5);
    self.gradient.setZero();
    self.hessian = self_hessian<double>(p);
    return self;
  }
  return coupling_jet<double>(r, p);
}

DipoleCoupling coupling(const Vec3<double>& ri, const Vec3<double>& rj, const Polarization& p) {
  const Vec3<double> r = kTwoPi * (ri - rj);
  if (r.squaredNorm() == 0.0) return {std::complex<double>(0.0, -0.5)};
  return {coupling_jet<double>(r, p).value};
}

std::complex<double> coupling_derivative(const Vec3<double>& ri, const Vec3<double>& rj,
                                         const Polarization& p, const Vec3<double>& axis) {
  return axis.cast<std::complex<double>>().dot(pair_jet(ri, rj, p).gradient);
}

std::complex<double> coupling_second_derivative(const Vec3<double>& ri, const Vec3<double>& rj,
                                                const Polarization& p, const Vec3<double>& axis_a,
                                                const Vec3<double>& axis_b) {
  const auto H = pair_jet(ri, rj, p).hessian;
  return (axis_a.cast<std::complex<double>>().transpose() * H * axis_b.cast<std::complex<double>>())(0, 0);
}

}  // namespace subradcool
