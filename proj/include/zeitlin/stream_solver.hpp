#pragma once

// Quantized Laplacian and stream-matrix solves.
//
// Delta_N W = -sum_a [S_a, [S_a, W]] maps every diagonal of W onto itself, so
// it splits into real symmetric tridiagonal blocks Delta^m of size N - |m|
// (Delta^{-m} = Delta^m). Solving Delta_N P = W is then one Thomas solve per
// diagonal: O(N^2) in total, O(N * Ntrunc) when only |m| <= Ntrunc is kept.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "zeitlin/quantization.hpp"
#include "zeitlin/types.hpp"

namespace zeitlin {

/// Reference application of the quantized Laplacian through spin generators.
/// O(N^3); used to define and check the block solver.
inline Matrix apply_laplacian(const Matrix& w) {
  require_square(w, "apply_laplacian");
  const auto s = spin_matrices(static_cast<int>(w.rows()));
  Matrix out = Matrix::Zero(w.rows(), w.cols());
  for (const Matrix* sa : {&s.s1, &s.s2, &s.s3}) {
    const Matrix inner = (*sa) * w - w * (*sa);
    out -= (*sa) * inner - inner * (*sa);
  }
  return out;
}

/// Diagonal-truncation order 0 < Ntrunc <= N - 1.
struct TruncationOrder {
  int value = 0;

  void validate(int n) const {
    if (value <= 0 || value > n - 1) throw std::invalid_argument("TruncationOrder: need 0 < Ntrunc <= N - 1");
  }
};

/// Zeroes every diagonal k with |k| > Ntrunc.
inline Matrix truncate_diagonals(const Matrix& w, TruncationOrder nt) {
  require_square(w, "truncate_diagonals");
  const int n = static_cast<int>(w.rows());
  nt.validate(n);
  Matrix out = w;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (std::abs(i - j) > nt.value) out(i, j) = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Banded storage
// ---------------------------------------------------------------------------

/// Square matrix with non-zeros only on diagonals |k| <= bandwidth
/// (k = row - col). Diagonal k is stored top-left first.
class BandedMatrix {
 public:
  BandedMatrix(int n, int bandwidth) : n_(n), bw_(bandwidth), diags_(static_cast<std::size_t>(2 * bandwidth + 1)) {
    for (int k = -bw_; k <= bw_; ++k) diag(k) = Vector::Zero(diagonal_length(n_, k));
  }

  [[nodiscard]] int size() const { return n_; }
  [[nodiscard]] int bandwidth() const { return bw_; }

  Vector& diag(int k) { return diags_[static_cast<std::size_t>(k + bw_)]; }
  [[nodiscard]] const Vector& diag(int k) const { return diags_[static_cast<std::size_t>(k + bw_)]; }

  [[nodiscard]] Matrix dense() const {
    Matrix out = Matrix::Zero(n_, n_);
    for (int k = -bw_; k <= bw_; ++k) {
      const Vector& d = diag(k);
      for (int p = 0; p < d.size(); ++p) out(diagonal_row(k, p), diagonal_col(k, p)) = d(p);
    }
    return out;
  }

  /// this * x, O(N * bandwidth * cols).
  [[nodiscard]] Matrix mul(const Matrix& x) const {
    Matrix out = Matrix::Zero(n_, x.cols());
    for (int k = -bw_; k <= bw_; ++k) {
      const Vector& d = diag(k);
      const int r0 = std::max(k, 0), c0 = std::max(-k, 0);
      const auto len = d.size();
      out.middleRows(r0, len).noalias() += d.asDiagonal() * x.middleRows(c0, len);
    }
    return out;
  }

  /// x * this, O(N * bandwidth * rows).
  [[nodiscard]] Matrix rmul(const Matrix& x) const {
    Matrix out = Matrix::Zero(x.rows(), n_);
    for (int k = -bw_; k <= bw_; ++k) {
      const Vector& d = diag(k);
      const int r0 = std::max(k, 0), c0 = std::max(-k, 0);
      const auto len = d.size();
      out.middleCols(c0, len).noalias() += x.middleCols(r0, len) * d.asDiagonal();
    }
    return out;
  }

 private:
  int n_;
  int bw_;
  std::vector<Vector> diags_;
};

// ---------------------------------------------------------------------------
// Laplacian blocks
// ---------------------------------------------------------------------------

/// One real symmetric tridiagonal block with its pre-factored Thomas sweep.
struct TridiagonalBlock {
  std::vector<double> diag;  // size n
  std::vector<double> off;   // size n - 1, couples p and p + 1
  // Thomas factorization of the leading `factored` rows.
  std::vector<double> upper;      // modified super-diagonal
  std::vector<double> inv_pivot;  // reciprocal pivots
  int factored = 0;

  [[nodiscard]] int size() const { return static_cast<int>(diag.size()); }

  /// Dense copy, for inspection and tests.
  [[nodiscard]] RealMatrix dense() const {
    const int n = size();
    RealMatrix a = RealMatrix::Zero(n, n);
    for (int p = 0; p < n; ++p) a(p, p) = diag[static_cast<std::size_t>(p)];
    for (int p = 0; p + 1 < n; ++p) a(p, p + 1) = a(p + 1, p) = off[static_cast<std::size_t>(p)];
    return a;
  }

  void factor(int rows) {
    factored = rows;
    upper.assign(static_cast<std::size_t>(rows), 0.0);
    inv_pivot.assign(static_cast<std::size_t>(rows), 0.0);
    double scale = 0.0;
    for (double d : diag) scale = std::max(scale, std::abs(d));
    for (int p = 0; p < rows; ++p) {
      const auto up = static_cast<std::size_t>(p);
      double piv = diag[up];
      if (p > 0) piv -= off[up - 1] * upper[up - 1];
      if (!(std::abs(piv) > 1e-13 * std::max(scale, 1.0)))
        throw NumericalError("Laplacian block has a vanishing pivot (inconsistent blocks)");
      inv_pivot[up] = 1.0 / piv;
      upper[up] = (p + 1 < size()) ? off[up] * inv_pivot[up] : 0.0;
    }
  }

  /// Solves the factored leading system in place on x[0 .. factored).
  template <typename Vec>
  void solve_in_place(Vec& x) const {
    const int n = factored;
    if (n == 0) return;
    x[0] *= inv_pivot[0];
    for (int p = 1; p < n; ++p) {
      const auto up = static_cast<std::size_t>(p);
      x[p] = (x[p] - off[up - 1] * x[p - 1]) * inv_pivot[up];
    }
    for (int p = n - 2; p >= 0; --p) x[p] -= upper[static_cast<std::size_t>(p)] * x[p + 1];
  }
};

/// Delta^m for m = 0 .. N-1, immutable after construction.
///
/// The Thomas coefficients are also laid out as N x N tables indexed like the
/// matrix entry they act on: entry (r, c) is position min(r, c) of diagonal
/// r - c and its predecessor is (r - 1, c - 1). A full solve can then sweep
/// whole columns instead of striding along diagonals.
class LaplacianBlocks {
 public:
  LaplacianBlocks() = default;
  explicit LaplacianBlocks(std::vector<TridiagonalBlock> blocks) : blocks_(std::move(blocks)) {
    const int n = size();
    sweep_off_ = RealMatrix::Zero(n, n);
    sweep_inv_ = RealMatrix::Zero(n, n);
    sweep_up_ = RealMatrix::Zero(n, n);
    for (int c = 0; c < n; ++c)
      for (int r = 0; r < n; ++r) {
        const TridiagonalBlock& b = block(r - c);
        const int p = std::min(r, c);
        const auto up = static_cast<std::size_t>(p);
        if (p >= b.factored) continue;  // the deflated entry of diagonal 0
        if (p > 0) sweep_off_(r, c) = b.off[up - 1];
        sweep_inv_(r, c) = b.inv_pivot[up];
        if (p + 1 < b.factored) sweep_up_(r, c) = b.upper[up];
      }
  }

  [[nodiscard]] int size() const { return static_cast<int>(blocks_.size()); }
  [[nodiscard]] const TridiagonalBlock& block(int m) const { return blocks_.at(static_cast<std::size_t>(std::abs(m))); }

  [[nodiscard]] const RealMatrix& sweep_off() const { return sweep_off_; }
  [[nodiscard]] const RealMatrix& sweep_inv() const { return sweep_inv_; }
  [[nodiscard]] const RealMatrix& sweep_up() const { return sweep_up_; }

 private:
  std::vector<TridiagonalBlock> blocks_;
  RealMatrix sweep_off_, sweep_inv_, sweep_up_;
};

/// Extracts Delta^m from the spin double commutator. With C = S1^2+S2^2+S3^2 = s(s+1) I,
/// -sum_a [S_a,[S_a,W]] = -2 s(s+1) W + 2 S3 W S3 + S+ W S- + S- W S+, and each of
/// these terms moves an entry of diagonal m only along diagonal m. Applying it
/// to the indicator of position p on diagonal m gives column p of Delta^m.
inline LaplacianBlocks build_blocks(int n) {
  if (n < 2) throw std::invalid_argument("build_blocks: N must be at least 2");
  const double s = 0.5 * (n - 1);
  // c[i] = (S+)_{i, i+1}
  std::vector<double> c(static_cast<std::size_t>(n - 1));
  for (int i = 0; i + 1 < n; ++i) c[static_cast<std::size_t>(i)] = ladder_coefficient(n, i + 1);
  auto label = [&](int i) { return s - i; };

  std::vector<TridiagonalBlock> blocks(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    auto& b = blocks[static_cast<std::size_t>(m)];
    const int len = n - m;
    b.diag.resize(static_cast<std::size_t>(len));
    b.off.resize(static_cast<std::size_t>(std::max(len - 1, 0)));
    // Position p on diagonal m is entry (p, p + m).
    for (int p = 0; p < len; ++p)
      b.diag[static_cast<std::size_t>(p)] = -2.0 * s * (s + 1.0) + 2.0 * label(p) * label(p + m);
    for (int p = 0; p + 1 < len; ++p)
      b.off[static_cast<std::size_t>(p)] = c[static_cast<std::size_t>(p)] * c[static_cast<std::size_t>(p + m)];
    // Delta^0 annihilates the all-ones vector; its leading (N-1) x (N-1) block is regular.
    b.factor(m == 0 ? len - 1 : len);
  }
  return LaplacianBlocks(std::move(blocks));
}

namespace detail {

// Solves Delta^k p = w on diagonal k in place. For k = 0 the mean of w is removed
// first and the solution is returned with zero mean.
inline void solve_diagonal(const LaplacianBlocks& blocks, int k, Vector& x) {
  const auto& b = blocks.block(k);
  if (k != 0) {
    b.solve_in_place(x);
    return;
  }
  const auto len = x.size();
  x.array() -= x.mean();
  x(len - 1) = 0.0;
  b.solve_in_place(x);
  x.array() -= x.mean();
}

inline Vector gather_diagonal(const Matrix& w, int k) {
  const int len = diagonal_length(static_cast<int>(w.rows()), k);
  Vector d(len);
  for (int p = 0; p < len; ++p) d(p) = w(diagonal_row(k, p), diagonal_col(k, p));
  return d;
}

// Diagonal k of U S U^*, O(r (N - |k|)) with V = U S precomputed.
inline Vector lowrank_diagonal(const Matrix& v, const Matrix& u, int k) {
  const int len = diagonal_length(static_cast<int>(u.rows()), k);
  const int r0 = std::max(k, 0), c0 = std::max(-k, 0);
  return (v.middleRows(r0, len).cwiseProduct(u.middleRows(c0, len).conjugate())).rowwise().sum();
}

}  // namespace detail

/// solve_stream writing into a caller-owned buffer; p may alias w.
inline void solve_stream_into(const LaplacianBlocks& blocks, const Matrix& w, Matrix& p) {
  require_square(w, "solve_stream");
  const int n = static_cast<int>(w.rows());
  if (n != blocks.size()) throw std::invalid_argument("solve_stream: size mismatch with Laplacian blocks");
  // Same arithmetic as solve_diagonal on every diagonal, in column order.
  // The forward sweep reads w directly, so no separate copy pass is needed.
  Vector d0 = w.diagonal();
  d0.array() -= d0.mean();
  d0(n - 1) = 0.0;
  if (&p != &w) p.resize(n, n);
  const RealMatrix& off = blocks.sweep_off();
  const RealMatrix& inv = blocks.sweep_inv();
  const RealMatrix& up = blocks.sweep_up();
  for (int c = 0; c < n; ++c) {
    const Complex* src = w.col(c).data();
    Complex* x = p.col(c).data();
    const double* iv = inv.col(c).data();
    if (c == 0) {
      x[0] = d0(0) * iv[0];
      for (int r = 1; r < n; ++r) x[r] = src[r] * iv[r];
      continue;
    }
    const Complex* xp = p.col(c - 1).data();
    const double* of = off.col(c).data();
    x[0] = src[0] * iv[0];
    for (int r = 1; r < c; ++r) x[r] = (src[r] - of[r] * xp[r - 1]) * iv[r];
    x[c] = (d0(c) - of[c] * xp[c - 1]) * iv[c];
    for (int r = c + 1; r < n; ++r) x[r] = (src[r] - of[r] * xp[r - 1]) * iv[r];
  }
  for (int c = n - 2; c >= 0; --c) {
    Complex* x = p.col(c).data();
    const Complex* xn = p.col(c + 1).data();
    const double* u = up.col(c).data();
    for (int r = 0; r + 1 < n; ++r) x[r] -= u[r] * xn[r + 1];
  }
  d0 = p.diagonal();
  d0.array() -= d0.mean();
  p.diagonal() = d0;
}

/// P with Delta_N P = W - (tr W / N) I and tr P = 0. O(N^2).
inline Matrix solve_stream(const LaplacianBlocks& blocks, const Matrix& w) {
  Matrix p;
  solve_stream_into(blocks, w, p);
  return p;
}

/// P~ with Delta_N P~ = T_Ntrunc(W) (trace deflated), banded with bandwidth Ntrunc. O(N * Ntrunc).
inline BandedMatrix solve_stream_truncated(const LaplacianBlocks& blocks, const Matrix& w, TruncationOrder nt) {
  require_square(w, "solve_stream_truncated");
  const int n = static_cast<int>(w.rows());
  if (n != blocks.size()) throw std::invalid_argument("solve_stream_truncated: size mismatch with Laplacian blocks");
  nt.validate(n);
  BandedMatrix p(n, nt.value);
  for (int k = -nt.value; k <= nt.value; ++k) {
    Vector d = detail::gather_diagonal(w, k);
    detail::solve_diagonal(blocks, k, d);
    p.diag(k) = std::move(d);
  }
  return p;
}

/// Stream matrix of Y = U S U^* without the truncation. Y is formed densely
/// (O(N^2 r)) and handed to solve_stream.
inline Matrix solve_stream_lowrank(const LaplacianBlocks& blocks, const Matrix& u, const Matrix& s) {
  if (u.cols() != s.rows() || s.rows() != s.cols()) throw std::invalid_argument("solve_stream_lowrank: U/S shape mismatch");
  const Matrix y = (u * s) * u.adjoint();
  return solve_stream(blocks, y);
}

/// Stream matrix of Y = U S U^* truncated to |k| <= Ntrunc, assembling only
/// the needed diagonals of Y. O(N * Ntrunc * r).
inline BandedMatrix solve_stream_lowrank(const LaplacianBlocks& blocks, const Matrix& u, const Matrix& s,
                                         TruncationOrder nt) {
  if (u.cols() != s.rows() || s.rows() != s.cols()) throw std::invalid_argument("solve_stream_lowrank: U/S shape mismatch");
  const int n = static_cast<int>(u.rows());
  if (n != blocks.size()) throw std::invalid_argument("solve_stream_lowrank: size mismatch with Laplacian blocks");
  nt.validate(n);
  const Matrix v = u * s;
  BandedMatrix p(n, nt.value);
  for (int k = -nt.value; k <= nt.value; ++k) {
    Vector d = detail::lowrank_diagonal(v, u, k);
    detail::solve_diagonal(blocks, k, d);
    p.diag(k) = std::move(d);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Stream map used by the integrators
// ---------------------------------------------------------------------------

/// A stream matrix that is either dense or banded, with the products the
/// integrators need.
class StreamMatrix {
 public:
  explicit StreamMatrix(Matrix dense) : dense_(std::move(dense)) {}
  explicit StreamMatrix(BandedMatrix banded) : banded_(std::move(banded)) {}

  [[nodiscard]] bool is_banded() const { return banded_.has_value(); }
  [[nodiscard]] Matrix mul(const Matrix& x) const { return banded_ ? banded_->mul(x) : Matrix(*dense_ * x); }
  [[nodiscard]] Matrix rmul(const Matrix& x) const { return banded_ ? banded_->rmul(x) : Matrix(x * *dense_); }
  [[nodiscard]] Matrix dense() const { return banded_ ? banded_->dense() : *dense_; }

 private:
  std::optional<Matrix> dense_;
  std::optional<BandedMatrix> banded_;
};

/// W -> P(W), with the diagonal truncation applied when configured.
class StreamSolver {
 public:
  explicit StreamSolver(int n, std::optional<TruncationOrder> nt = std::nullopt)
      : blocks_(build_blocks(n)), nt_(nt) {
    if (nt_) nt_->validate(n);
  }

  [[nodiscard]] int size() const { return blocks_.size(); }
  [[nodiscard]] const LaplacianBlocks& blocks() const { return blocks_; }
  [[nodiscard]] const std::optional<TruncationOrder>& truncation() const { return nt_; }

  [[nodiscard]] StreamMatrix operator()(const Matrix& w) const {
    if (nt_) return StreamMatrix(solve_stream_truncated(blocks_, w, *nt_));
    return StreamMatrix(solve_stream(blocks_, w));
  }

  [[nodiscard]] StreamMatrix operator()(const Matrix& u, const Matrix& s) const {
    if (nt_) return StreamMatrix(solve_stream_lowrank(blocks_, u, s, *nt_));
    return StreamMatrix(solve_stream_lowrank(blocks_, u, s));
  }

 private:
  LaplacianBlocks blocks_;
  std::optional<TruncationOrder> nt_;
};

}  // namespace zeitlin
