#include "subradcool/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <unsupported/Eigen/MatrixFunctions>

namespace subradcool {

namespace {

void require_finite(const CMat& A, const char* what) {
  if (!A.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

// Rotate v so that its largest component (first one on ties) is real positive.
void fix_phase(Eigen::Ref<CVec> v) {
  double big = v.cwiseAbs().maxCoeff();
  if (big == 0.0) return;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= big * (1.0 - 1e-9)) {
      v *= std::conj(v(i)) / std::abs(v(i));
      return;
    }
  }
}

// Bilinear (unconjugated) Gram-Schmidt inside one degenerate cluster.
void rebase_cluster(CMat& vecs, const std::vector<int>& cols) {
  const int k = static_cast<int>(cols.size());
  CMat W(vecs.rows(), k);
  for (int a = 0; a < k; ++a) W.col(a) = vecs.col(cols[a]);
  for (int a = 0; a < k; ++a) {
    int best = a;
    double best_val = -1.0;
    for (int b = a; b < k; ++b) {
      double q = std::abs(W.col(b).cwiseProduct(W.col(b)).sum()) / W.col(b).squaredNorm();
      if (q > best_val) {
        best_val = q;
        best = b;
      }
    }
    if (best_val < 1e-8) {
      // every remaining vector is self-orthogonal; combine the pair with largest overlap
      int p = a, q = a + 1;
      double top = -1.0;
      for (int b = a; b < k; ++b)
        for (int c = b + 1; c < k; ++c) {
          double o = std::abs(W.col(b).cwiseProduct(W.col(c)).sum());
          if (o > top) {
            top = o;
            p = b;
            q = c;
          }
        }
      if (q < k && top > 0.0) W.col(p) += W.col(q);
      best = p;
    }
    W.col(a).swap(W.col(best));
    W.col(a).normalize();
    cplx self = W.col(a).transpose() * W.col(a);
    if (std::abs(self) < 1e-14) continue;
    for (int b = a + 1; b < k; ++b) {
      cplx proj = (W.col(a).transpose() * W.col(b))(0, 0) / self;
      W.col(b) -= proj * W.col(a);
    }
  }
  for (int a = 0; a < k; ++a) {
    W.col(a).normalize();
    vecs.col(cols[a]) = W.col(a);
  }
}

}  // namespace

EigenDecomposition eig_general(const CMat& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("eig_general: matrix is not square");
  require_finite(A, "eig_general");
  const Eigen::Index n = A.rows();
  EigenDecomposition out;
  if (n == 0) return out;

  Eigen::ComplexEigenSolver<CMat> es(A, true);
  if (es.info() != Eigen::Success) throw NumericalError("eig_general: eigensolver failed to converge");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const CVec& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (ev(a).real() != ev(b).real()) return ev(a).real() < ev(b).real();
    return ev(a).imag() < ev(b).imag();
  });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = ev(order[k]);
    out.vectors.col(k) = es.eigenvectors().col(order[k]).normalized();
  }

  const double anorm = std::max(A.norm(), 1e-300);
  const bool symmetric = (A - A.transpose()).norm() <= 1e-12 * anorm;
  if (symmetric) {
    std::vector<int> cluster_of(n, -1);
    int nclusters = 0;
    for (Eigen::Index a = 0; a < n; ++a) {
      if (cluster_of[a] < 0) cluster_of[a] = nclusters++;
      for (Eigen::Index b = a + 1; b < n; ++b) {
        if (std::abs(out.values(a) - out.values(b)) <= 1e-8 * anorm) {
          if (cluster_of[b] < 0) {
            cluster_of[b] = cluster_of[a];
          } else if (cluster_of[b] != cluster_of[a]) {
            int from = cluster_of[b], to = cluster_of[a];
            for (auto& c : cluster_of)
              if (c == from) c = to;
          }
        }
      }
    }
    std::vector<std::vector<int>> members(nclusters);
    for (Eigen::Index a = 0; a < n; ++a) members[cluster_of[a]].push_back(static_cast<int>(a));
    for (const auto& m : members)
      if (m.size() > 1) rebase_cluster(out.vectors, m);
  }
  for (Eigen::Index k = 0; k < n; ++k) fix_phase(out.vectors.col(k));

  for (Eigen::Index k = 0; k < n; ++k) {
    double res = (A * out.vectors.col(k) - out.values(k) * out.vectors.col(k)).norm();
    if (res > 1e-9 * anorm)
      throw NumericalError("eig_general: eigenpair residual too large (defective input?)");
  }
  return out;
}

CVec solve_linear(const CMat& A, const CVec& b, double rcond_min) {
  if (A.rows() != A.cols()) throw std::invalid_argument("solve_linear: matrix is not square");
  if (b.size() != A.rows()) throw std::invalid_argument("solve_linear: dimension mismatch");
  require_finite(A, "solve_linear");
  if (A.rows() == 0) return b;
  if (A.cwiseAbs().maxCoeff() == 0.0) throw NumericalError("solve_linear: singular matrix");
  Eigen::PartialPivLU<CMat> lu(A);
  // the rcond estimate is unreliable with an exactly zero pivot
  const double pivot_floor = A.cwiseAbs().maxCoeff() * std::numeric_limits<double>::epsilon();
  if (!(lu.matrixLU().diagonal().cwiseAbs().minCoeff() > pivot_floor) || !(lu.rcond() > rcond_min)) throw NumericalError("solve_linear: matrix is singular to working precision");
  CVec x = lu.solve(b);
  // one step of iterative refinement
  x += lu.solve(b - A * x);
  return x;
}

CVec expm_action(const CMat& L, const CVec& v, double t, double tol) {
  if (L.rows() != L.cols() || L.cols() != v.size())
    throw std::invalid_argument("expm_action: dimension mismatch");
  if (t < 0) throw std::invalid_argument("expm_action: negative time");
  require_finite(L, "expm_action");
  if (t == 0.0 || L.rows() == 0) return v;
  if (L.rows() <= 256) {
    CMat Lt = L * t;
    return Lt.exp() * v;
  }
  return krylov_expm_action(L.sparseView(), v, t, tol);
}

CVec expm_action(const SpMat& L, const CVec& v, double t, double tol) {
  if (L.rows() != L.cols() || L.cols() != v.size())
    throw std::invalid_argument("expm_action: dimension mismatch");
  if (t < 0) throw std::invalid_argument("expm_action: negative time");
  if (t == 0.0 || L.rows() == 0) return v;
  if (L.rows() <= 256) {
    CMat Lt = CMat(L) * t;
    return Lt.exp() * v;
  }
  return krylov_expm_action(L, v, t, tol);
}

// Krylov projection with local error control after Sidje's expv.
CVec krylov_expm_action(const SpMat& L, const CVec& v, double t, double tol, int krylov_dim) {
  const Eigen::Index n = L.rows();
  if (t == 0.0) return v;
  const double beta0 = v.norm();
  if (beta0 == 0.0) return v;
  double anorm = 0.0;
  for (int k = 0; k < L.outerSize(); ++k) {
    double col = 0.0;
    for (SpMat::InnerIterator it(L, k); it; ++it) col += std::abs(it.value());
    anorm = std::max(anorm, col);
  }
  if (anorm == 0.0) return v;

  const int m = static_cast<int>(std::min<Eigen::Index>(krylov_dim, n));
  const double btol = 1e-12 * anorm;
  const double gamma = 0.9, delta = 1.2;
  const double tol_rate = tol * beta0 / t;
  const double xm = 1.0 / m;

  CVec w = v;
  double t_now = 0.0;
  double fact = std::pow((m + 1) / std::exp(1.0), m + 1) * std::sqrt(2.0 * M_PI * (m + 1));
  double tau = (1.0 / anorm) * std::pow((fact * tol) / (4.0 * anorm), xm);
  tau = std::min(tau, t);
  long steps = 0;

  CMat V(n, m + 1);
  CMat H(m + 2, m + 2);
  while (t_now < t) {
    if (++steps > 2'000'000) throw NumericalError("expm_action: Krylov step limit reached");
    tau = std::min(t - t_now, tau);
    double beta = w.norm();
    if (beta == 0.0) return w;
    V.setZero();
    H.setZero();
    V.col(0) = w / beta;
    int mb = m;
    bool happy = false;
    CVec p(n);
    for (int j = 0; j < m; ++j) {
      p.noalias() = L * V.col(j);
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          cplx h = V.col(i).dot(p);
          H(i, j) += h;
          p -= h * V.col(i);
        }
      }
      double s = p.norm();
      if (s < btol) {
        happy = true;
        mb = j + 1;
        tau = t - t_now;
        break;
      }
      H(j + 1, j) = s;
      V.col(j + 1) = p / s;
    }
    if (happy) {
      CMat Hs = H.topLeftCorner(mb, mb) * tau;
      CMat F = Hs.exp();
      w = beta * (V.leftCols(mb) * F.col(0));
      t_now += tau;
      continue;
    }
    H(m + 1, m) = 1.0;
    double avnorm = (L * V.col(m)).norm();

    int rejects = 0;
    double err = 0.0;
    CMat F;
    while (true) {
      CMat Ht = H * tau;
      F = Ht.exp();
      double err1 = std::abs(beta * F(m, 0));
      double err2 = std::abs(beta * F(m + 1, 0)) * avnorm;
      if (err1 > 10.0 * err2)
        err = err2;
      else if (err1 > err2)
        err = err1 * err2 / (err1 - err2);
      else
        err = err1;
      if (err <= delta * tau * tol_rate) break;
      if (++rejects > 30) throw NumericalError("expm_action: Krylov tolerance not reached");
      tau = gamma * tau * std::pow(tau * tol_rate / err, xm);
    }
    w = beta * (V * F.col(0).head(m + 1));
    t_now += tau;
    double grow = (err > 0.0) ? gamma * std::pow(tau * tol_rate / err, xm) : 5.0;
    tau *= std::clamp(grow, 0.2, 5.0);
  }
  return w;
}

std::vector<CVec> integrate_linear_ode(const LinearRhs& rhs, const CVec& y0,
                                       const std::vector<double>& times, const OdeOptions& opt) {
  std::vector<CVec> out;
  if (times.empty()) return out;
  for (size_t k = 1; k < times.size(); ++k)
    if (!(times[k] >= times[k - 1])) throw std::invalid_argument("integrate_linear_ode: time grid not monotone");

  // Dormand-Prince tableau
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  const Eigen::Index n = y0.size();
  CVec y = y0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
  double t = times.front();
  const double span = std::max(times.back() - times.front(), 1e-300);
  double h = opt.initial_step > 0 ? opt.initial_step : span * 1e-3;
  rhs(t, y, k1);
  out.push_back(y);
  long steps = 0;

  for (size_t idx = 1; idx < times.size(); ++idx) {
    const double target = times[idx];
    while (t < target) {
      if (++steps > opt.max_steps) throw NumericalError("integrate_linear_ode: step limit reached");
      bool last = false;
      double hs = h;
      if (t + hs >= target) {
        hs = target - t;
        last = true;
      }
      if (hs < opt.min_step * span)
        throw NumericalError("integrate_linear_ode: step size underflow (stiff problem)");
      ytmp = y + hs * a21 * k1;
      rhs(t + c2 * hs, ytmp, k2);
      ytmp = y + hs * (a31 * k1 + a32 * k2);
      rhs(t + c3 * hs, ytmp, k3);
      ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
      rhs(t + c4 * hs, ytmp, k4);
      ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      rhs(t + c5 * hs, ytmp, k5);
      ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      rhs(t + hs, ytmp, k6);
      ynew = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      rhs(t + hs, ynew, k7);
      err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double enorm = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double sc = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
        enorm = std::max(enorm, std::abs(err(i)) / sc);
      }
      if (!std::isfinite(enorm)) throw NumericalError("integrate_linear_ode: non-finite state");
      if (enorm <= 1.0) {
        t = last ? target : t + hs;
        y = ynew;
        k1 = k7;
        double fac = enorm > 0 ? 0.9 * std::pow(enorm, -0.2) : 5.0;
        if (!last) h = hs * std::clamp(fac, 0.2, 5.0);
      } else {
        h = hs * std::max(0.2, 0.9 * std::pow(enorm, -0.2));
      }
    }
    out.push_back(y);
  }
  return out;
}

ExponentialFit fit_exponential_decay(const std::vector<double>& t, const std::vector<double>& y,
                                     double max_relative_residual) {
  const size_t n = t.size();
  if (n < 8 || y.size() != n) throw std::invalid_argument("fit_exponential_decay: need >= 8 paired samples");
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(t[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("fit_exponential_decay: non-finite sample");

  auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const double range = *ymax - *ymin;
  const double scale = std::max(std::abs(*ymax), std::abs(*ymin));
  ExponentialFit fit;
  if (range <= 1e-13 * scale || range == 0.0) {
    fit.asymptote = std::accumulate(y.begin(), y.end(), 0.0) / n;
    return fit;
  }
  const double t0 = t.front();
  const double T = t.back() - t0;
  if (!(T > 0)) throw std::invalid_argument("fit_exponential_decay: degenerate time grid");

  // Linear least squares for (A, c) at fixed rate.
  auto project = [&](double rate, double& A, double& c) {
    double s_ee = 0, s_e = 0, s_ey = 0, s_y = 0;
    for (size_t i = 0; i < n; ++i) {
      double e = std::exp(-rate * (t[i] - t0));
      s_ee += e * e;
      s_e += e;
      s_ey += e * y[i];
      s_y += y[i];
    }
    double det = s_ee * n - s_e * s_e;
    if (std::abs(det) < 1e-300) {
      A = 0;
      c = s_y / n;
    } else {
      A = (s_ey * n - s_e * s_y) / det;
      c = (s_ee * s_y - s_e * s_ey) / det;
    }
    double sse = 0;
    for (size_t i = 0; i < n; ++i) {
      double r = y[i] - A * std::exp(-rate * (t[i] - t0)) - c;
      sse += r * r;
    }
    return sse;
  };

  // log-linear initialization against the tail value
  double c0 = y.back();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = std::abs(y[i] - c0);
    if (d > 0.05 * range) {
      double ly = std::log(d);
      sx += t[i];
      sy += ly;
      sxx += t[i] * t[i];
      sxy += t[i] * ly;
      ++used;
    }
  }
  double rate0 = 1.0 / T;
  if (used >= 2) {
    double slope = (used * sxy - sx * sy) / (used * sxx - sx * sx);
    if (std::isfinite(slope) && slope < 0) rate0 = -slope;
  }

  // coarse scan in log(rate * T), then golden-section refinement
  double best_u = std::log(rate0 * T), best_sse;
  {
    double A, c;
    best_sse = project(rate0, A, c);
  }
  const int grid = 161;
  const double umin = std::log(1e-4), umax = std::log(1e4);
  double step = (umax - umin) / (grid - 1);
  for (int k = 0; k < grid; ++k) {
    double u = umin + k * step;
    double A, c;
    double s = project(std::exp(u) / T, A, c);
    if (s < best_sse) {
      best_sse = s;
      best_u = u;
    }
  }
  double lo = best_u - step, hi = best_u + step;
  const double gr = (std::sqrt(5.0) - 1) / 2;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double A, c;
  double f1 = project(std::exp(x1) / T, A, c), f2 = project(std::exp(x2) / T, A, c);
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = project(std::exp(x1) / T, A, c);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = project(std::exp(x2) / T, A, c);
    }
  }
  double u = 0.5 * (lo + hi);
  double sse = project(std::exp(u) / T, A, c);
  if (best_sse < sse) {
    u = best_u;
    sse = project(std::exp(u) / T, A, c);
  }
  fit.rate = std::exp(u) / T;
  fit.amplitude = A * std::exp(fit.rate * t0);
  fit.asymptote = c;
  fit.residual = std::sqrt(sse / n);
  if (!(fit.rate >= 0)) throw NumericalError("fit_exponential_decay: negative rate");
  if (fit.residual > max_relative_residual * range)
    throw NumericalError("fit_exponential_decay: data not described by a single exponential");
  return fit;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) out[k] = (n == 1) ? a : a + (b - a) * k / (n - 1);
  return out;
}

std::vector<double> logspace(double log10_a, double log10_b, int n) {
  std::vector<double> out = linspace(log10_a, log10_b, n);
  for (auto& x : out) x = std::pow(10.0, x);
  return out;
}

}  // namespace subradcool
