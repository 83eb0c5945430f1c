#pragma once

// Initial conditions: random skew-Hermitian states with a prescribed spectrum
// and the four-vortex-blob state.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "zeitlin/quantization.hpp"
#include "zeitlin/state.hpp"
#include "zeitlin/types.hpp"

namespace zeitlin {

enum class ScenarioKind { random_spectrum, vortex_blobs };

inline std::string to_string(ScenarioKind k) {
  return k == ScenarioKind::random_spectrum ? "random-spectrum" : "vortex-blobs";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "random-spectrum") return ScenarioKind::random_spectrum;
  if (s == "vortex-blobs") return ScenarioKind::vortex_blobs;
  throw ConfigError("unknown scenario kind '" + s + "'");
}

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::random_spectrum;
  int n = 16;
  std::uint64_t seed = 1;
  // random-spectrum
  double lo = 1e-11;
  double hi = 10.0;
  // vortex-blobs
  int blob_count = 4;
  double amplitude = 100.0;        // exponent scale is amplitude * sqrt(N)
  bool literal_transpose = false;  // R^T B R instead of R^* B R, then skew projection
  bool subtract_trace = false;     // project onto su(N)

  void validate() const {
    if (n < 2) throw ConfigError("scenario: N must be at least 2");
    if (kind == ScenarioKind::random_spectrum && !(lo > 0.0 && hi > lo))
      throw ConfigError("scenario: spectrum range must satisfy 0 < lo < hi");
    if (kind == ScenarioKind::vortex_blobs && blob_count < 1) throw ConfigError("scenario: blob-count must be positive");
  }
};

/// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seedable stream: stream k of seed s is mt19937_64 seeded with
/// splitmix64(s ^ splitmix64(k)). Uniforms use the top 53 bits; normals use
/// Box-Muller. No std:: distributions, so sequences are portable.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : eng_(splitmix64(seed ^ splitmix64(stream))) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases
/// of diag(R) moved into Q.
inline Matrix haar_unitary(int n, Rng& rng) {
  Matrix g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double re = rng.normal(), im = rng.normal();
      g(i, j) = Complex(re, im) / std::numbers::sqrt2;
    }
  return reorthonormalize(g);
}

/// Moduli equally spaced on [lo, hi]; signs follow +, -, -, + repeating; the
/// last value absorbs the residual sum so the spectrum is traceless (the
/// correction is roundoff when N is a multiple of four).
inline RealVector prescribed_spectrum(int n, double lo, double hi) {
  RealVector mu(n);
  for (int j = 0; j < n; ++j) {
    const double modulus = n == 1 ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
    const int phase = j % 4;
    mu(j) = (phase == 0 || phase == 3) ? modulus : -modulus;
  }
  mu(n - 1) -= mu.sum();
  return mu;
}

/// Q diag(i mu) Q^* with Q Haar-random (stream 0 of the seed).
inline Matrix random_spectrum_ic(const ScenarioSpec& spec) {
  spec.validate();
  if (spec.kind != ScenarioKind::random_spectrum) throw ConfigError("random_spectrum_ic: wrong scenario kind");
  Rng rng(spec.seed, 0);
  const Matrix q = haar_unitary(spec.n, rng);
  const RealVector mu = prescribed_spectrum(spec.n, spec.lo, spec.hi);
  const Matrix w = q * (kI * mu.cast<Complex>()).asDiagonal() * q.adjoint();
  return skew_part(w);
}

/// exp(X) for skew-Hermitian X through the eigendecomposition of -iX.
inline Matrix expm_skew(const Matrix& x) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(-kI * x);
  if (es.info() != Eigen::Success) throw NumericalError("expm_skew: eigen-decomposition failed");
  const Vector phases = (kI * es.eigenvalues().cast<Complex>()).array().exp().matrix();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// amplitude sqrt(N) (i a (T11 - T1-1) - b (T11 + T1-1) + i c T10).
inline Matrix blob_exponent(int n, double a, double b, double c, double amplitude) {
  const Matrix t11 = basis_matrix(n, {1, 1}).dense();
  const Matrix t1m = basis_matrix(n, {1, -1}).dense();
  const Matrix t10 = basis_matrix(n, {1, 0}).dense();
  return amplitude * std::sqrt(static_cast<double>(n)) * (kI * a * (t11 - t1m) - b * (t11 + t1m) + kI * c * t10);
}

/// W0 = 2i sum_j R_j^* B R_j with B = e_N e_N^T and R_j = exp(blob exponent);
/// a_j, b_j, c_j are drawn uniform in [0, 1) from stream j + 1 of the seed.
inline Matrix vortex_blob_ic(const ScenarioSpec& spec) {
  spec.validate();
  if (spec.kind != ScenarioKind::vortex_blobs) throw ConfigError("vortex_blob_ic: wrong scenario kind");
  const int n = spec.n;
  if (n < 2) throw ConfigError("vortex_blob_ic: N must be at least 2");
  Matrix w = Matrix::Zero(n, n);
  for (int j = 0; j < spec.blob_count; ++j) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(j) + 1);
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    const Matrix r = expm_skew(blob_exponent(n, a, b, c, spec.amplitude));
    // R^* B R = conj(row N of R)^T (row N of R).
    const Eigen::RowVectorXcd row = r.row(n - 1);
    if (spec.literal_transpose)
      w += row.transpose() * row;
    else
      w += row.adjoint() * row;
  }
  w *= Complex(0.0, 2.0);
  w = skew_part(w);
  if (spec.subtract_trace) w -= (w.trace() / static_cast<double>(n)) * Matrix::Identity(n, n);
  return w;
}

inline Matrix initial_condition(const ScenarioSpec& spec) {
  return spec.kind == ScenarioKind::random_spectrum ? random_spectrum_ic(spec) : vortex_blob_ic(spec);
}

}  // namespace zeitlin
