#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace zeitlin {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kFourPi = 4.0 * std::numbers::pi;

// Error taxonomy. The CLI maps these onto exit codes.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonConvergenceError : NumericalError {
  NonConvergenceError(const std::string& what, double last_residual, int iterations)
      : NumericalError(what), residual(last_residual), iters(iterations) {}
  double residual;
  int iters;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Quantization scale hbar_N = 2 / sqrt(N^2 - 1).
inline double hbar(int n) {
  if (n < 2) throw std::invalid_argument("hbar: N must be at least 2");
  const double nn = static_cast<double>(n);
  return 2.0 / std::sqrt(nn * nn - 1.0);
}

inline void require_square(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(who) + ": matrix must be square");
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

/// Relative skew-Hermitian defect ||A + A^*||_F / ||A||_F (0 for A = 0).
inline double skew_defect(const Matrix& a) {
  const double n = a.norm();
  if (n == 0.0) return 0.0;
  return (a + a.adjoint()).norm() / n;
}

inline Matrix skew_part(const Matrix& a) { return 0.5 * (a - a.adjoint()); }

}  // namespace zeitlin
