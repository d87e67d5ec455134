#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace subradcool {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<cplx>;

inline constexpr cplx I1{0.0, 1.0};

// Raised for solver failures; the CLI maps it to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EigenDecomposition {
  CVec values;   // sorted by real part, then imaginary part
  CMat vectors;  // columns, unit Euclidean norm
};

// Eigenpairs of a general square matrix. For complex-symmetric input the
// columns inside a degenerate cluster are re-based so that v^T v != 0.
EigenDecomposition eig_general(const CMat& A);

// Dense LU solve with a reciprocal-condition guard.
CVec solve_linear(const CMat& A, const CVec& b, double rcond_min = 1e-14);

// exp(L t) v. Dense scaling-and-squaring up to dim 256, Krylov above.
CVec expm_action(const CMat& L, const CVec& v, double t, double tol = 1e-9);
CVec expm_action(const SpMat& L, const CVec& v, double t, double tol = 1e-9);
CVec krylov_expm_action(const SpMat& L, const CVec& v, double t, double tol = 1e-9,
                        int krylov_dim = 30);

// dy/dt = rhs(t, y), written into dy.
using LinearRhs = std::function<void(double t, const CVec& y, CVec& dy)>;

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-14;
  double initial_step = 0.0;  // 0 picks a heuristic
  double min_step = 1e-12;    // relative to the integration span
  long max_steps = 10'000'000;
};

// Dormand-Prince 5(4) with adaptive steps; samples returned at `times`.
std::vector<CVec> integrate_linear_ode(const LinearRhs& rhs, const CVec& y0,
                                       const std::vector<double>& times,
                                       const OdeOptions& opt = {});

struct ExponentialFit {
  double rate = 0.0;       // Gamma
  double asymptote = 0.0;  // c
  double amplitude = 0.0;  // A
  double residual = 0.0;   // RMS residual
};

// Least squares y = A exp(-Gamma t) + c.
ExponentialFit fit_exponential_decay(const std::vector<double>& t, const std::vector<double>& y,
                                     double max_relative_residual = 0.05);

std::vector<double> linspace(double a, double b, int n);
std::vector<double> logspace(double log10_a, double log10_b, int n);

}  // namespace subradcool
