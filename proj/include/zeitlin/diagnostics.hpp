#pragma once

// Monitored quantities: Hamiltonian, Casimirs, spectra, error norms and the
// a-priori bounds for the low-rank approximation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "zeitlin/state.hpp"
#include "zeitlin/stream_solver.hpp"
#include "zeitlin/types.hpp"

namespace zeitlin {

namespace detail {

inline double checked_hamiltonian(Complex pairing, double scale, const char* who) {
  const double h = -0.5 * pairing.real();
  if (std::abs(pairing.imag()) > 1e-10 * std::max(scale, 1e-300))
    throw NumericalError(std::string(who) + ": Hamiltonian has a non-negligible imaginary part");
  return h;
}

}  // namespace detail

/// H(W) = -1/2 <W, P(W)>_N, with the solver's truncation if any (giving the
/// approximate Hamiltonian).
inline double hamiltonian(const StreamSolver& solver, const Matrix& w) {
  const Matrix p = solver(w).dense();
  const double n = static_cast<double>(w.rows());
  const Complex pairing = kFourPi / n * (w.adjoint() * p).trace();
  return detail::checked_hamiltonian(pairing, kFourPi / n * w.norm() * p.norm(), "hamiltonian");
}

/// H(U S U^*) without forming the N x N state: tr(S^* U^* P U).
inline double hamiltonian(const StreamSolver& solver, const SpectralFactorization& f) {
  const Matrix pu = solver(f.u, f.s).mul(f.u);
  const Matrix q = f.u.adjoint() * pu;
  const double n = static_cast<double>(f.n());
  const Complex pairing = kFourPi / n * (f.s.adjoint() * q).trace();
  return detail::checked_hamiltonian(pairing, kFourPi / n * f.s.norm() * q.norm(), "hamiltonian");
}

/// Casimirs from a spectrum: C_k = (4 pi / n) sum_j lambda_j^k. For purely
/// imaginary lambda the power sum is real for even k and imaginary for odd k;
/// the nonzero component is reported (real part for even k, imaginary part
/// for odd k).
inline RealVector casimirs_from_spectrum(const Vector& lambda, int k_max, int n) {
  if (k_max < 1) throw std::invalid_argument("casimirs: k_max must be at least 1");
  RealVector c(k_max);
  Vector pw = Vector::Ones(lambda.size());
  for (int k = 1; k <= k_max; ++k) {
    pw = pw.cwiseProduct(lambda);
    const Complex sum = pw.sum();
    c(k - 1) = kFourPi / static_cast<double>(n) * (k % 2 == 0 ? sum.real() : sum.imag());
  }
  return c;
}

/// C_k(W) for k = 1..k_max via eigenvalue power sums.
inline RealVector casimirs(const Matrix& w, int k_max) {
  return casimirs_from_spectrum(sorted_spectrum(w), k_max, static_cast<int>(w.rows()));
}

/// C_k(U S U^*) = (4 pi / N) tr(S^k), with N the ambient size.
inline RealVector casimirs(const SpectralFactorization& f, int k_max) {
  return casimirs_from_spectrum(sorted_spectrum(f.s), k_max, f.n());
}

/// Sorts a purely imaginary spectrum by |Im| descending, then Im descending.
inline Vector sort_spectrum(Vector lambda) {
  std::vector<Complex> v(lambda.data(), lambda.data() + lambda.size());
  std::stable_sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
    const double ma = std::abs(a.imag()), mb = std::abs(b.imag());
    if (ma != mb) return ma > mb;
    return a.imag() > b.imag();
  });
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = v[static_cast<std::size_t>(i)];
  return lambda;
}

/// Spectrum of U S U^*: spectrum(S) padded with zeros, sorted.
inline Vector factored_spectrum(const SpectralFactorization& f) {
  Vector lambda = Vector::Zero(f.n());
  lambda.head(f.r()) = sorted_spectrum(f.s);
  return sort_spectrum(lambda);
}

inline double spectrum_distance(const Vector& reference, const Vector& current) {
  if (reference.size() != current.size()) throw std::invalid_argument("spectrum_drift: length mismatch");
  return (reference - current).cwiseAbs().maxCoeff();
}

/// max_j |lambda_j(reference) - lambda_j(current)| in the common ordering.
inline double spectrum_drift(const Vector& reference, const Matrix& current) {
  return spectrum_distance(reference, sorted_spectrum(current));
}

inline double spectrum_drift(const Vector& reference, const SpectralFactorization& current) {
  return spectrum_distance(reference, factored_spectrum(current));
}

/// ||A - B||_F.
inline double frobenius_error(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_error");
  return (a - b).norm();
}

inline double frobenius_error(const Matrix& a, const SpectralFactorization& b) {
  return frobenius_error(a, reconstruct(b));
}

inline double frobenius_error(const SpectralFactorization& a, const Matrix& b) { return frobenius_error(b, a); }

/// ||U A U^* - X B X^*||_F via a thin QR of [U | X]: the difference equals
/// Q R diag(A, -B) R^* Q^*, so only the small core is formed.
inline double frobenius_error(const SpectralFactorization& a, const SpectralFactorization& b) {
  if (a.n() != b.n()) throw std::invalid_argument("frobenius_error: ambient size mismatch");
  const Eigen::Index ra = a.r(), rb = b.r(), k = ra + rb;
  Matrix frame(a.n(), k);
  frame << a.u, b.u;
  Eigen::HouseholderQR<Matrix> qr(frame);
  const Eigen::Index kk = std::min<Eigen::Index>(k, a.n());
  const Matrix r = qr.matrixQR().topRows(kk).triangularView<Eigen::Upper>();
  Matrix core = Matrix::Zero(k, k);
  core.topLeftCorner(ra, ra) = a.s;
  core.bottomRightCorner(rb, rb) = -b.s;
  return (r * core * r.adjoint()).norm();
}

enum class BoundVariant { exact_stream, truncated_stream };

struct AprioriBound {
  double k = 0.0;          // Lipschitz constant 2 hbar^{-1} sqrt(N) rho(W0)
  double tail_norm = 0.0;  // sqrt(sum_{i>r} sigma_i^2)
  double bound_value = 0.0;
  BoundVariant variant = BoundVariant::exact_stream;
};

/// Samples of ||W(s) - T(W(s))||_F along a trajectory, for the truncated
/// variant's integral term.
struct TruncationSamples {
  std::vector<double> times;
  std::vector<double> values;
};

/// Right-hand side of the a-priori error bound between the low-rank solution
/// and the best rank-r approximation of the exact solution. The truncated
/// variant uses the same Lipschitz constant for the truncated field and
/// evaluates its integral term by the trapezoidal rule over `samples`
/// (restricted to s <= t).
inline AprioriBound apriori_bound(const Matrix& w0, int r, double t, BoundVariant variant = BoundVariant::exact_stream,
                                  const TruncationSamples& samples = {}) {
  require_square(w0, "apriori_bound");
  const int n = static_cast<int>(w0.rows());
  if (r < 1 || r > n) throw std::out_of_range("apriori_bound: rank out of range");
  if (t < 0.0) throw std::invalid_argument("apriori_bound: t must be nonnegative");
  const RealVector sigma = singular_values_normal(w0);
  const double hb = hbar(n);
  AprioriBound out;
  out.variant = variant;
  out.k = 2.0 / hb * std::sqrt(static_cast<double>(n)) * sigma(0);
  out.tail_norm = sigma.tail(n - r).norm();
  if (out.k == 0.0) return out;
  const double growth = std::expm1(out.k * t);
  if (variant == BoundVariant::exact_stream) {
    out.bound_value = sigma.head(r).norm() / (hb * out.k) * growth * out.tail_norm;
    return out;
  }
  const double w0_norm = sigma.norm();
  double integral = 0.0;
  if (samples.times.size() != samples.values.size())
    throw std::invalid_argument("apriori_bound: samples must pair times with values");
  for (std::size_t i = 1; i < samples.times.size(); ++i) {
    const double s0 = samples.times[i - 1], s1 = samples.times[i];
    if (s1 > t) break;
    const double f0 = samples.values[i - 1] * std::exp(out.k * (t - s0));
    const double f1 = samples.values[i] * std::exp(out.k * (t - s1));
    integral += 0.5 * (s1 - s0) * (f0 + f1);
  }
  out.bound_value = (1.0 + w0_norm / (hb * out.k)) * growth * out.tail_norm + w0_norm * 0.5 * integral;
  return out;
}

struct DiagnosticsRecord {
  double time = 0.0;
  double hamiltonian = 0.0;
  double hamiltonian_normalized = 0.0;  // N / (4 pi) * H
  RealVector casimirs;
  Vector eigenvalues;
  double eig_drift = 0.0;
  std::optional<double> frobenius_error_vs_reference;
  double wall_ms = 0.0;
};

/// Shortest round-trip-safe decimal form used in every CSV.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// time,H,H_norm,C1..Ck,eig_drift,frob_err,wall_ms
inline std::string csv_header(int k_max) {
  std::string h = "time,H,H_norm";
  for (int k = 1; k <= k_max; ++k) h += ",C" + std::to_string(k);
  h += ",eig_drift,frob_err,wall_ms";
  return h;
}

/// One CSV row (no trailing newline). A missing reference error is written as
/// an empty field.
inline std::string csv_row(const DiagnosticsRecord& rec) {
  std::string row = format_double(rec.time) + "," + format_double(rec.hamiltonian) + "," +
                    format_double(rec.hamiltonian_normalized);
  for (Eigen::Index k = 0; k < rec.casimirs.size(); ++k) row += "," + format_double(rec.casimirs(k));
  row += "," + format_double(rec.eig_drift) + ",";
  if (rec.frobenius_error_vs_reference) row += format_double(*rec.frobenius_error_vs_reference);
  row += "," + format_double(rec.wall_ms);
  return row;
}

}  // namespace zeitlin
