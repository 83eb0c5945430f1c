#pragma once

// Quantized spherical harmonics: the basis matrices T^N_{l,m}, the projection
// of harmonic coefficients onto u(N) and back, spin generators, and synthesis
// of a vorticity field on a latitude-longitude grid.
//
// Index conventions used throughout the library:
//   * row/column i of an N x N matrix carries the spin label s - i, s = (N-1)/2;
//   * "diagonal k" is the set of entries (i, j) with i - j = k, so that
//     T_{l,m} lives on diagonal -m.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "zeitlin/types.hpp"

namespace zeitlin {

// ---------------------------------------------------------------------------
// Wigner 3j symbols
// ---------------------------------------------------------------------------

namespace detail {

// log(k!) for k < size, accumulated in long double.
inline const std::vector<long double>& log_factorials() {
  static const std::vector<long double> table = [] {
    constexpr int kSize = 16384;
    std::vector<long double> t(kSize);
    t[0] = 0.0L;
    for (int k = 1; k < kSize; ++k) t[k] = t[k - 1] + std::log(static_cast<long double>(k));
    return t;
  }();
  return table;
}

inline long double log_fact(int k) {
  const auto& t = log_factorials();
  if (k < 0 || k >= static_cast<int>(t.size())) throw std::out_of_range("log_fact: argument out of table range");
  return t[k];
}

}  // namespace detail

/// Largest doubled j (2j) for which wigner3j stays within 1e-10 relative error
/// of exact arithmetic; beyond it the alternating Racah sum loses digits to
/// cancellation (about 1e-9 at 2j = 80). Basis matrices are therefore accurate
/// for N <= 61. Checked against the exact oracle in the test suite.
inline constexpr int kWigner3jAccurateTwoJ = 60;

/// Wigner 3j symbol (j1 j2 j3; m1 m2 m3) with every argument passed doubled
/// (tj1 = 2*j1, ...), so half-integers are exact.
///
/// Evaluates the Racah single-sum formula with log-factorials. Returns exactly
/// zero when a selection rule fails. Throws std::domain_error for negative j,
/// |m| > j, or a j/m parity mismatch.
inline double wigner3j(int tj1, int tj2, int tj3, int tm1, int tm2, int tm3) {
  const int tj[3] = {tj1, tj2, tj3};
  const int tm[3] = {tm1, tm2, tm3};
  for (int a = 0; a < 3; ++a) {
    if (tj[a] < 0) throw std::domain_error("wigner3j: negative j");
    if (std::abs(tm[a]) > tj[a]) throw std::domain_error("wigner3j: |m| > j");
    if ((tj[a] - tm[a]) % 2 != 0) throw std::domain_error("wigner3j: j and m parity mismatch");
  }
  if (tm1 + tm2 + tm3 != 0) return 0.0;
  if (tj3 > tj1 + tj2 || tj3 < std::abs(tj1 - tj2)) return 0.0;
  if ((tj1 + tj2 + tj3) % 2 != 0) return 0.0;
  // (j1 j2 j3; 0 0 0) vanishes for odd j1 + j2 + j3.
  if (tm1 == 0 && tm2 == 0 && tm3 == 0 && ((tj1 + tj2 + tj3) / 2) % 2 != 0) return 0.0;

  // Integer combinations that appear as factorial arguments.
  const int j1pj2mj3 = (tj1 + tj2 - tj3) / 2;
  const int j1mj2pj3 = (tj1 - tj2 + tj3) / 2;
  const int mj1pj2pj3 = (-tj1 + tj2 + tj3) / 2;
  const int jsum1 = (tj1 + tj2 + tj3) / 2 + 1;
  const int j1pm1 = (tj1 + tm1) / 2, j1mm1 = (tj1 - tm1) / 2;
  const int j2pm2 = (tj2 + tm2) / 2, j2mm2 = (tj2 - tm2) / 2;
  const int j3pm3 = (tj3 + tm3) / 2, j3mm3 = (tj3 - tm3) / 2;
  const int j3mj2pm1 = (tj3 - tj2 + tm1) / 2;
  const int j3mj1mm2 = (tj3 - tj1 - tm2) / 2;

  using detail::log_fact;
  const long double log_pref =
      0.5L * (log_fact(j1pj2mj3) + log_fact(j1mj2pj3) + log_fact(mj1pj2pj3) - log_fact(jsum1) +
              log_fact(j1pm1) + log_fact(j1mm1) + log_fact(j2pm2) + log_fact(j2mm2) + log_fact(j3pm3) +
              log_fact(j3mm3));

  const int kmin = std::max({0, -j3mj2pm1, -j3mj1mm2});
  const int kmax = std::min({j1pj2mj3, j1mm1, j2pm2});
  if (kmin > kmax) return 0.0;

  std::vector<long double> logs;
  logs.reserve(static_cast<std::size_t>(kmax - kmin + 1));
  long double top = -1e300L;
  for (int k = kmin; k <= kmax; ++k) {
    const long double l = -(log_fact(k) + log_fact(j3mj2pm1 + k) + log_fact(j3mj1mm2 + k) +
                            log_fact(j1pj2mj3 - k) + log_fact(j1mm1 - k) + log_fact(j2pm2 - k));
    logs.push_back(l);
    top = std::max(top, l);
  }
  long double sum = 0.0L;
  for (int k = kmin; k <= kmax; ++k) {
    const long double t = std::exp(logs[static_cast<std::size_t>(k - kmin)] - top);
    sum += (k % 2 == 0) ? t : -t;
  }
  // Overall phase (-1)^(j1 - j2 - m3).
  const int phase_exp = (tj1 - tj2 - tm3) / 2;
  const long double sign = (phase_exp % 2 == 0) ? 1.0L : -1.0L;
  return static_cast<double>(sign * sum * std::exp(top + log_pref));
}

// ---------------------------------------------------------------------------
// Harmonic indices and basis matrices
// ---------------------------------------------------------------------------

struct HarmonicIndex {
  int ell = 0;
  int m = 0;

  /// Position in the flat ordering (0,0), (1,-1), (1,0), (1,1), (2,-2), ...
  [[nodiscard]] int flat() const { return ell * ell + ell + m; }
  [[nodiscard]] bool valid_for(int n) const { return ell >= 0 && ell < n && std::abs(m) <= ell; }

  static HarmonicIndex from_flat(int k) {
    const int ell = static_cast<int>(std::sqrt(static_cast<double>(k)));
    int l = ell;
    while (l * l > k) --l;
    while ((l + 1) * (l + 1) <= k) ++l;
    return {l, k - l * l - l};
  }

  friend bool operator==(const HarmonicIndex&, const HarmonicIndex&) = default;
};

/// Number of entries on diagonal k (row - col = k) of an n x n matrix.
inline int diagonal_length(int n, int k) { return n - std::abs(k); }
inline int diagonal_row(int k, int p) { return p + std::max(k, 0); }
inline int diagonal_col(int k, int p) { return p + std::max(-k, 0); }

/// T^N_{l,m} stored by its single non-zero diagonal (diagonal -m).
class BasisMatrix {
 public:
  BasisMatrix(int n, HarmonicIndex idx, std::vector<double> values)
      : n_(n), idx_(idx), values_(std::move(values)) {}

  [[nodiscard]] int size() const { return n_; }
  [[nodiscard]] HarmonicIndex index() const { return idx_; }
  /// Diagonal carrying the entries, in the row - col convention.
  [[nodiscard]] int diagonal() const { return -idx_.m; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }

  [[nodiscard]] Matrix dense() const {
    Matrix t = Matrix::Zero(n_, n_);
    const int k = diagonal();
    for (int p = 0; p < static_cast<int>(values_.size()); ++p)
      t(diagonal_row(k, p), diagonal_col(k, p)) = values_[static_cast<std::size_t>(p)];
    return t;
  }

  /// Frobenius pairing trace(T^* W), touching only the support of T.
  [[nodiscard]] Complex frobenius_with(const Matrix& w) const {
    const int k = diagonal();
    Complex acc = 0.0;
    for (int p = 0; p < static_cast<int>(values_.size()); ++p)
      acc += values_[static_cast<std::size_t>(p)] * w(diagonal_row(k, p), diagonal_col(k, p));
    return acc;
  }

  /// w += coeff * T, touching only the support of T.
  void add_to(Matrix& w, Complex coeff) const {
    const int k = diagonal();
    for (int p = 0; p < static_cast<int>(values_.size()); ++p)
      w(diagonal_row(k, p), diagonal_col(k, p)) += coeff * values_[static_cast<std::size_t>(p)];
  }

 private:
  int n_;
  HarmonicIndex idx_;
  std::vector<double> values_;
};

/// Builds T^N_{l,m}. Entry (i, i + m) carries
/// sqrt(N/4pi) (-1)^(s - m1) sqrt(2l+1) (s l s; -m1 m m2) with m1 = s - i, m2 = m1 - m.
inline BasisMatrix basis_matrix(int n, HarmonicIndex idx) {
  if (n < 1) throw std::out_of_range("basis_matrix: N must be positive");
  if (!idx.valid_for(n)) throw std::out_of_range("basis_matrix: harmonic index out of range");
  const int ts = n - 1;  // 2s
  const double scale = std::sqrt(static_cast<double>(n) / kFourPi) * std::sqrt(2.0 * idx.ell + 1.0);
  const int k = -idx.m;
  const int len = diagonal_length(n, k);
  std::vector<double> vals(static_cast<std::size_t>(len));
  for (int p = 0; p < len; ++p) {
    const int i = diagonal_row(k, p);
    const int tm1 = ts - 2 * i;
    const int tm2 = tm1 - 2 * idx.m;
    const double phase = (i % 2 == 0) ? 1.0 : -1.0;
    vals[static_cast<std::size_t>(p)] = scale * phase * wigner3j(ts, 2 * idx.ell, ts, -tm1, 2 * idx.m, tm2);
  }
  return {n, idx, std::move(vals)};
}

/// The full family {T^N_{l,m}} for one N, built once and shared read-only.
class Basis {
 public:
  explicit Basis(int n) : n_(n) {
    if (n < 1) throw std::out_of_range("Basis: N must be positive");
    mats_.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int f = 0; f < n * n; ++f) mats_.push_back(basis_matrix(n, HarmonicIndex::from_flat(f)));
  }

  [[nodiscard]] int size() const { return n_; }
  [[nodiscard]] int count() const { return n_ * n_; }
  [[nodiscard]] const BasisMatrix& operator[](HarmonicIndex idx) const {
    if (!idx.valid_for(n_)) throw std::out_of_range("Basis: harmonic index out of range");
    return mats_[static_cast<std::size_t>(idx.flat())];
  }
  [[nodiscard]] const BasisMatrix& at_flat(int f) const { return mats_.at(static_cast<std::size_t>(f)); }

  /// Process-wide cache keyed by N.
  static std::shared_ptr<const Basis> shared(int n);

 private:
  int n_;
  std::vector<BasisMatrix> mats_;
};

inline std::shared_ptr<const Basis> Basis::shared(int n) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const Basis>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<const Basis>(n);
  return slot;
}

// ---------------------------------------------------------------------------
// Coefficients <-> matrices
// ---------------------------------------------------------------------------

/// Harmonic coefficients omega^{l m}, 0 <= l < N, in flat order.
struct CoefficientVector {
  int n = 0;
  std::vector<Complex> coeffs;

  explicit CoefficientVector(int size = 0) : n(size), coeffs(static_cast<std::size_t>(size * size), 0.0) {}

  Complex& operator[](HarmonicIndex idx) { return coeffs.at(static_cast<std::size_t>(idx.flat())); }
  const Complex& operator[](HarmonicIndex idx) const { return coeffs.at(static_cast<std::size_t>(idx.flat())); }

  /// Largest violation of omega^{l,-m} = (-1)^m conj(omega^{l,m}).
  [[nodiscard]] double reality_defect() const {
    double worst = 0.0;
    for (int l = 0; l < n; ++l)
      for (int m = 0; m <= l; ++m) {
        const Complex a = (*this)[{l, m}];
        const Complex b = (*this)[{l, -m}];
        const double sign = (m % 2 == 0) ? 1.0 : -1.0;
        worst = std::max(worst, std::abs(b - sign * std::conj(a)));
      }
    return worst;
  }

  [[nodiscard]] double max_abs() const {
    double s = 0.0;
    for (const auto& c : coeffs) s = std::max(s, std::abs(c));
    return s;
  }
};

/// W = sum_{l,m} i omega^{lm} T_{l,m}. Throws std::invalid_argument when the
/// coefficients violate the reality constraint.
inline Matrix project(const CoefficientVector& c, const Basis& basis) {
  if (c.n != basis.size()) throw std::invalid_argument("project: coefficient/basis size mismatch");
  if (c.reality_defect() > 1e-12 * std::max(1.0, c.max_abs()))
    throw std::invalid_argument("project: coefficients violate the reality constraint");
  Matrix w = Matrix::Zero(c.n, c.n);
  for (int f = 0; f < c.n * c.n; ++f) {
    const Complex om = c.coeffs[static_cast<std::size_t>(f)];
    if (om != 0.0) basis.at_flat(f).add_to(w, kI * om);
  }
  return w;
}

inline Matrix project(const CoefficientVector& c) { return project(c, *Basis::shared(c.n)); }

/// omega^{lm} = <i T_{l,m}, W>_N.
inline CoefficientVector lift(const Matrix& w, const Basis& basis) {
  require_square(w, "lift");
  if (w.rows() != basis.size()) throw std::invalid_argument("lift: matrix/basis size mismatch");
  const int n = basis.size();
  CoefficientVector c(n);
  const double scale = kFourPi / n;
  for (int f = 0; f < n * n; ++f)
    c.coeffs[static_cast<std::size_t>(f)] = -kI * scale * basis.at_flat(f).frobenius_with(w);
  return c;
}

inline CoefficientVector lift(const Matrix& w) {
  require_square(w, "lift");
  return lift(w, *Basis::shared(static_cast<int>(w.rows())));
}

// ---------------------------------------------------------------------------
// Spin generators
// ---------------------------------------------------------------------------

struct SpinMatrices {
  Matrix s1, s2, s3;
};

/// Ladder coefficient <s, m+1 | S+ | s, m> for column j (m = s - j), j >= 1.
inline double ladder_coefficient(int n, int j) {
  const double s = 0.5 * (n - 1);
  const double m = s - j;
  return std::sqrt(s * (s + 1.0) - m * (m + 1.0));
}

/// Spin-s generators (s = (N-1)/2) with S3 = diag(s, s-1, ..., -s).
inline SpinMatrices spin_matrices(int n) {
  if (n < 1) throw std::invalid_argument("spin_matrices: N must be positive");
  const double s = 0.5 * (n - 1);
  Matrix sp = Matrix::Zero(n, n);
  for (int j = 1; j < n; ++j) sp(j - 1, j) = ladder_coefficient(n, j);
  const Matrix sm = sp.transpose();
  SpinMatrices out;
  out.s1 = 0.5 * (sp + sm);
  out.s2 = (sp - sm) / (2.0 * kI);
  out.s3 = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) out.s3(i, i) = s - i;
  return out;
}

// ---------------------------------------------------------------------------
// Field synthesis
// ---------------------------------------------------------------------------

struct FieldGrid {
  int n_theta = 0;
  int n_phi = 0;
  std::vector<double> theta;  // inclination nodes, [0, pi]
  std::vector<double> phi;    // azimuth nodes, [0, 2pi)
  RealMatrix values;          // n_theta x n_phi
  double max_imag_residual = 0.0;
};

/// Fully normalized associated Legendre values P^m_l(cos theta) (Condon-Shortley
/// phase included) for 0 <= m <= l < lmax, laid out as out[l*(l+1)/2 + m].
inline std::vector<double> normalized_legendre(int lmax, double theta) {
  std::vector<double> out(static_cast<std::size_t>(lmax * (lmax + 1) / 2), 0.0);
  if (lmax == 0) return out;
  const double x = std::cos(theta), y = std::sin(theta);
  auto at = [&](int l, int m) -> double& { return out[static_cast<std::size_t>(l * (l + 1) / 2 + m)]; };
  double pmm = 1.0 / std::sqrt(kFourPi);
  for (int m = 0; m < lmax; ++m) {
    if (m > 0) pmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * y;
    at(m, m) = pmm;
    if (m + 1 < lmax) at(m + 1, m) = std::sqrt(2.0 * m + 3.0) * x * pmm;
    for (int l = m + 2; l < lmax; ++l) {
      const double ll = l, mm = m;
      const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
      const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
      at(l, m) = a * (x * at(l - 1, m) - b * at(l - 2, m));
    }
  }
  return out;
}

/// Complex spherical harmonic Y_{l,m}(theta, phi), orthonormal on the sphere.
inline Complex spherical_harmonic(int l, int m, double theta, double phi) {
  const auto p = normalized_legendre(l + 1, theta);
  const int am = std::abs(m);
  const Complex y = p[static_cast<std::size_t>(l * (l + 1) / 2 + am)] * std::exp(kI * (am * phi));
  if (m >= 0) return y;
  return ((am % 2 == 0) ? 1.0 : -1.0) * std::conj(y);
}

/// Evaluates omega(theta, phi) = sum omega^{lm} Y_{l,m} with omega = lift(W).
inline FieldGrid render_field(const Matrix& w, int n_theta, int n_phi) {
  if (n_theta < 2 || n_phi < 2) throw std::invalid_argument("render_field: grid must be at least 2 x 2");
  require_square(w, "render_field");
  if (skew_defect(w) > 1e-10) throw std::invalid_argument("render_field: W must be skew-Hermitian");
  const int n = static_cast<int>(w.rows());
  const CoefficientVector c = lift(w);

  FieldGrid g;
  g.n_theta = n_theta;
  g.n_phi = n_phi;
  g.values = RealMatrix::Zero(n_theta, n_phi);
  for (int i = 0; i < n_theta; ++i) g.theta.push_back(std::numbers::pi * i / (n_theta - 1));
  for (int j = 0; j < n_phi; ++j) g.phi.push_back(2.0 * std::numbers::pi * j / n_phi);

  double peak = 0.0, imag = 0.0;
  for (int i = 0; i < n_theta; ++i) {
    const auto p = normalized_legendre(n, g.theta[static_cast<std::size_t>(i)]);
    for (int j = 0; j < n_phi; ++j) {
      const double ph = g.phi[static_cast<std::size_t>(j)];
      Complex acc = 0.0;
      for (int l = 0; l < n; ++l) {
        acc += c[{l, 0}] * p[static_cast<std::size_t>(l * (l + 1) / 2)];
        for (int m = 1; m <= l; ++m) {
          const Complex e = std::exp(kI * (m * ph));
          const double plm = p[static_cast<std::size_t>(l * (l + 1) / 2 + m)];
          const double sign = (m % 2 == 0) ? 1.0 : -1.0;
          acc += c[{l, m}] * plm * e + c[{l, -m}] * sign * plm * std::conj(e);
        }
      }
      g.values(i, j) = acc.real();
      peak = std::max(peak, std::abs(acc));
      imag = std::max(imag, std::abs(acc.imag()));
    }
  }
  g.max_imag_residual = peak > 0.0 ? imag / peak : 0.0;
  if (g.max_imag_residual > 1e-9)
    throw NumericalError("render_field: imaginary residual exceeds tolerance");
  return g;
}

}  // namespace zeitlin
