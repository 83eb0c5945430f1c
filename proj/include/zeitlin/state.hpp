#pragma once

// Matrix states: scaled pairings on u(N), spectral ordering, best rank-r
// factorization Y = U S U^* and its reconstruction.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "zeitlin/types.hpp"

namespace zeitlin {

/// <A, B>_N = (4 pi / N) trace(A^* B).
inline Complex scaled_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "scaled_inner");
  return kFourPi / static_cast<double>(a.rows()) * (a.adjoint() * b).trace();
}

/// [A, B]_N = (AB - BA) / hbar_N.
inline Matrix scaled_bracket(const Matrix& a, const Matrix& b) {
  require_square(a, "scaled_bracket");
  require_same_shape(a, b, "scaled_bracket");
  return (a * b - b * a) / hbar(static_cast<int>(a.rows()));
}

/// Eigen-decomposition of a skew-Hermitian matrix with a deterministic order:
/// |Im lambda| descending, then Im lambda descending, then original index.
struct SkewEigen {
  Vector eigenvalues;  // purely imaginary, sorted
  Matrix vectors;      // columns match eigenvalues; largest-modulus entry real positive
};

inline SkewEigen skew_eigen(const Matrix& w, bool with_vectors = true) {
  require_square(w, "skew_eigen");
  const Matrix h = -kI * w;  // Hermitian
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("skew_eigen: eigen-decomposition failed");
  const RealVector mu = es.eigenvalues();
  const int n = static_cast<int>(mu.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = std::abs(mu(a)), mb = std::abs(mu(b));
    if (ma != mb) return ma > mb;
    if (mu(a) != mu(b)) return mu(a) > mu(b);
    return a < b;
  });
  SkewEigen out;
  out.eigenvalues.resize(n);
  if (with_vectors) out.vectors.resize(n, n);
  for (int k = 0; k < n; ++k) {
    const int src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = kI * mu(src);
    if (!with_vectors) continue;
    Vector v = es.eigenvectors().col(src);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (std::abs(v(big)) > 0.0) v *= std::conj(v(big)) / std::abs(v(big));
    out.vectors.col(k) = v;
  }
  return out;
}

/// Spectrum of a skew-Hermitian matrix in the deterministic order above.
inline Vector sorted_spectrum(const Matrix& w) { return skew_eigen(w, false).eigenvalues; }

/// Singular values of a normal matrix from its spectrum: |lambda|, descending.
inline RealVector singular_values_normal(const Matrix& w) { return sorted_spectrum(w).cwiseAbs(); }

/// Y = U S U^*, U an orthonormal N x r frame, S an r x r skew-Hermitian core.
struct SpectralFactorization {
  Matrix u;
  Matrix s;

  [[nodiscard]] int n() const { return static_cast<int>(u.rows()); }
  [[nodiscard]] int r() const { return static_cast<int>(u.cols()); }

  /// ||U^* U - I||_F.
  [[nodiscard]] double orthonormality_defect() const {
    return (u.adjoint() * u - Matrix::Identity(r(), r())).norm();
  }

  /// Throws std::invalid_argument unless U^*U = I and S is skew-Hermitian to `tol`.
  void validate(double tol = 1e-12) const {
    if (s.rows() != s.cols() || s.rows() != u.cols()) throw std::invalid_argument("SpectralFactorization: shape mismatch");
    if (orthonormality_defect() > tol * std::max(1.0, std::sqrt(static_cast<double>(r()))))
      throw std::invalid_argument("SpectralFactorization: U is not orthonormal");
    if ((s + s.adjoint()).norm() > tol * std::max(1.0, s.norm()))
      throw std::invalid_argument("SpectralFactorization: S is not skew-Hermitian");
  }
};

/// Dense Y = U S U^*.
inline Matrix reconstruct(const SpectralFactorization& f) { return (f.u * f.s) * f.u.adjoint(); }

struct TruncatedEig {
  SpectralFactorization factors;
  Vector spectrum;              // full sorted spectrum of W
  bool degenerate_cut = false;  // sigma_r == sigma_{r+1} within 1e-12 relative
};

/// Keeps the r eigenpairs of largest modulus: the Frobenius-optimal rank-r
/// approximation of a normal matrix.
inline TruncatedEig truncated_eig(const Matrix& w, int r) {
  require_square(w, "truncated_eig");
  const int n = static_cast<int>(w.rows());
  if (r < 1 || r > n) throw std::out_of_range("truncated_eig: rank out of range");
  const SkewEigen e = skew_eigen(w);
  TruncatedEig out;
  out.spectrum = e.eigenvalues;
  out.factors.u = e.vectors.leftCols(r);
  out.factors.s = Matrix::Zero(r, r);
  for (int k = 0; k < r; ++k) out.factors.s(k, k) = Complex(0.0, e.eigenvalues(k).imag());
  if (r < n) {
    const double a = std::abs(e.eigenvalues(r - 1)), b = std::abs(e.eigenvalues(r));
    out.degenerate_cut = (a - b) <= 1e-12 * std::max(a, 1e-300);
  }
  return out;
}

/// Best rank-r approximation of a normal matrix, formed densely.
inline Matrix best_rank_approximation(const Matrix& w, int r) { return reconstruct(truncated_eig(w, r).factors); }

/// Maintenance re-orthonormalization of a frame (thin QR with positive R
/// diagonal). Off by default in every integrator.
inline Matrix reorthonormalize(const Matrix& u) {
  Eigen::HouseholderQR<Matrix> qr(u);
  Matrix q = qr.householderQ() * Matrix::Identity(u.rows(), u.cols());
  const Matrix r = qr.matrixQR().topRows(u.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    const Complex d = r(k, k);
    if (std::abs(d) > 0.0) q.col(k) *= d / std::abs(d);
  }
  return q;
}

}  // namespace zeitlin
