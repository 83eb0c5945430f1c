#pragma once

// Time integrators for the Zeitlin system and its low-rank reductions:
// Iso2 on u(N), explicit RK-MK with the Cayley map on the Stiefel manifold,
// the implicit-midpoint Stiefel scheme, and the Strang splitting for the
// time-dependent core.

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zeitlin/state.hpp"
#include "zeitlin/stream_solver.hpp"
#include "zeitlin/types.hpp"

namespace zeitlin {

struct ButcherTableau {
  std::string name;
  RealMatrix a;  // strictly lower triangular
  RealVector b;

  [[nodiscard]] int stages() const { return static_cast<int>(b.size()); }

  void validate() const {
    const int s = stages();
    if (s < 1) throw ConfigError("ButcherTableau: no stages");
    if (a.rows() != s || a.cols() != s) throw ConfigError("ButcherTableau: a must be stages x stages");
    for (int i = 0; i < s; ++i)
      for (int j = i; j < s; ++j)
        if (a(i, j) != 0.0) throw ConfigError("ButcherTableau: tableau is not explicit");
    if (std::abs(b.sum() - 1.0) > 1e-14) throw ConfigError("ButcherTableau: weights must sum to one");
  }

  static ButcherTableau euler() { return {"euler", RealMatrix::Zero(1, 1), RealVector::Ones(1)}; }

  static ButcherTableau heun() {
    RealMatrix a = RealMatrix::Zero(2, 2);
    a(1, 0) = 1.0;
    RealVector b(2);
    b << 0.5, 0.5;
    return {"heun", a, b};
  }

  /// "euler"/"rkmk1" or "heun"/"rkmk2".
  static ButcherTableau by_name(const std::string& name) {
    if (name == "euler" || name == "rkmk1") return euler();
    if (name == "heun" || name == "rkmk2") return heun();
    throw ConfigError("unknown tableau '" + name + "'");
  }
};

struct FixedPointConfig {
  double tol = 1e-12;  // relative to the norm of the state at the start of the step
  int max_iters = 100;

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("FixedPointConfig: tol must be positive");
    if (max_iters < 1) throw ConfigError("FixedPointConfig: max_iters must be at least 1");
  }
};

struct StepReport {
  int iterations = 0;
  double residual = 0.0;
  std::chrono::nanoseconds wall{0};
};

template <class T>
struct Stepped {
  T value;
  StepReport report;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline Matrix left(const Matrix& p, const Matrix& x) { return p * x; }
inline Matrix left(const StreamMatrix& p, const Matrix& x) { return p.mul(x); }
inline Matrix right(const Matrix& x, const Matrix& p) { return x * p; }
inline Matrix right(const Matrix& x, const StreamMatrix& p) { return p.rmul(x); }

/// Fixed-point loop shared by the implicit schemes. `next(x)` returns the
/// next iterate; stops on ||x_{j+1} - x_j||_F < tol * scale.
template <class Next>
std::pair<Matrix, StepReport> fixed_point(const Matrix& start, double scale, const FixedPointConfig& cfg, Next&& next) {
  cfg.validate();
  const double threshold = cfg.tol * (scale > 0.0 ? scale : 1.0);
  Matrix x = start;
  StepReport rep;
  for (int j = 1; j <= cfg.max_iters; ++j) {
    Matrix y = next(x);
    rep.residual = (y - x).norm();
    rep.iterations = j;
    x = std::move(y);
    if (rep.residual < threshold) return {std::move(x), rep};
    if (!std::isfinite(rep.residual)) break;
  }
  throw NonConvergenceError("fixed-point iteration did not converge (residual " + std::to_string(rep.residual) + ")",
                            rep.residual, rep.iterations);
}

/// Iso2 on any u(n) with a supplied stream map and quantization scale.
template <class StreamMap>
Stepped<Matrix> iso2_generic(const Matrix& w, double dt, double hb, const FixedPointConfig& cfg, StreamMap&& stream) {
  const auto t0 = Clock::now();
  const double c = dt / (2.0 * hb);
  auto next = [&](const Matrix& wt) {
    const auto p = stream(wt);
    const Matrix pw = left(p, wt);
    const Matrix wp = right(wt, p);
    return Matrix(w - c * (pw - wp) + c * c * right(pw, p));
  };
  auto [wt, rep] = fixed_point(w, w.norm(), cfg, next);
  const auto p = stream(wt);
  const Matrix x = wt - c * left(p, wt);
  Matrix out = x + c * right(x, p);
  rep.wall = Clock::now() - t0;
  return {std::move(out), rep};
}

}  // namespace detail

/// One Iso2 step. The solver's truncation, if any, is used for every stream
/// evaluation inside the step.
inline Stepped<Matrix> iso2_step(const StreamSolver& solver, const Matrix& w, double dt,
                                 const FixedPointConfig& cfg = {}) {
  require_square(w, "iso2_step");
  if (w.rows() != solver.size()) throw std::invalid_argument("iso2_step: size mismatch");
  return detail::iso2_generic(w, dt, hbar(solver.size()), cfg, [&](const Matrix& x) { return solver(x); });
}

/// Dense Cayley transform (I - Omega/2)^{-1} (I + Omega/2).
inline Matrix cayley(const Matrix& omega) {
  require_square(omega, "cayley");
  const Matrix id = Matrix::Identity(omega.rows(), omega.cols());
  return (id - 0.5 * omega).partialPivLu().solve(id + 0.5 * omega);
}

/// Omega = X Y^*, with X, Y of size N x k.
struct FactoredSkew {
  Matrix x;
  Matrix y;

  static FactoredSkew zero(Eigen::Index n) { return {Matrix(n, 0), Matrix(n, 0)}; }

  [[nodiscard]] Eigen::Index width() const { return x.cols(); }
  [[nodiscard]] Matrix dense() const { return x * y.adjoint(); }

  /// (I - Omega/2) M.
  [[nodiscard]] Matrix apply_a(const Matrix& m) const {
    if (width() == 0) return m;
    return m - 0.5 * (x * (y.adjoint() * m));
  }

  /// Appends coeff * other to this factorization.
  void accumulate(double coeff, const FactoredSkew& other) {
    if (coeff == 0.0 || other.width() == 0) return;
    const Eigen::Index k = width(), kk = other.width();
    Matrix nx(x.rows(), k + kk), ny(y.rows(), k + kk);
    nx << x, coeff * other.x;
    ny << y, other.y;
    x = std::move(nx);
    y = std::move(ny);
  }
};

/// cay(Omega) U through the k x k system (I - Y^*X/2): never forms N x N.
inline Matrix cayley_apply(const FactoredSkew& omega, const Matrix& u) {
  if (omega.width() == 0) return u;
  const Eigen::Index k = omega.width();
  const Matrix small = Matrix::Identity(k, k) - 0.5 * (omega.y.adjoint() * omega.x);
  return u + omega.x * small.partialPivLu().solve(omega.y.adjoint() * u);
}

/// L = a b^* - U c^*.
struct LowRankGenerator {
  Matrix a;
  Matrix b;
  Matrix u;
  Matrix c;

  [[nodiscard]] Matrix dense() const { return a * b.adjoint() - u * c.adjoint(); }
};

/// Generator (I - UU^*) F U^* - U F^* for a frame U and velocity F.
inline LowRankGenerator stiefel_generator(const Matrix& u, const Matrix& f) {
  const Eigen::Index r = u.cols();
  LowRankGenerator g;
  g.a.resize(u.rows(), 2 * r);
  g.a << f, -u;
  g.b.resize(u.rows(), 2 * r);
  g.b << u, f;
  g.u = u;
  g.c = u * (f.adjoint() * u);
  return g;
}

/// Inverse tangent of the Cayley map, (I - Omega/2) L (I - Omega/2)^*, in
/// factored form [A a | -A U] [A b | A c]^*.
inline FactoredSkew dcayinv(const FactoredSkew& omega, const LowRankGenerator& l) {
  const Matrix aa = omega.apply_a(l.a), ab = omega.apply_a(l.b);
  const Matrix au = omega.apply_a(l.u), ac = omega.apply_a(l.c);
  FactoredSkew out;
  out.x.resize(aa.rows(), aa.cols() + au.cols());
  out.x << aa, -au;
  out.y.resize(ab.rows(), ab.cols() + ac.cols());
  out.y << ab, ac;
  return out;
}

/// Explicit RK-MK step U -> cay(Omega) U for U' = L(U) U with
/// L(U) = (I - UU^*) F(U) U^* - U F(U)^*.
template <class Velocity>
Matrix rkmk_generic(const Matrix& u, double dt, const ButcherTableau& tab, Velocity&& velocity) {
  tab.validate();
  const int s = tab.stages();
  std::vector<FactoredSkew> lambdas;
  lambdas.reserve(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    FactoredSkew omega = FactoredSkew::zero(u.rows());
    for (int j = 0; j < i; ++j) omega.accumulate(dt * tab.a(i, j), lambdas[static_cast<std::size_t>(j)]);
    const Matrix ui = cayley_apply(omega, u);
    lambdas.push_back(dcayinv(omega, stiefel_generator(ui, velocity(ui))));
  }
  FactoredSkew omega = FactoredSkew::zero(u.rows());
  for (int i = 0; i < s; ++i) omega.accumulate(dt * tab.b(i), lambdas[static_cast<std::size_t>(i)]);
  return cayley_apply(omega, u);
}

/// RK-MK step for U' + hbar^{-1} P(U S0 U^*) U = 0 with S0 fixed.
inline Matrix rkmk_step(const StreamSolver& solver, const Matrix& u, const Matrix& s0, double dt,
                        const ButcherTableau& tab) {
  if (u.rows() != solver.size() || s0.rows() != u.cols()) throw std::invalid_argument("rkmk_step: shape mismatch");
  const double inv_hb = 1.0 / hbar(solver.size());
  return rkmk_generic(u, dt, tab, [&](const Matrix& x) { return Matrix(-inv_hb * solver(x, s0).mul(x)); });
}

/// Implicit midpoint on the Stiefel manifold: the factored form of Iso2.
inline Stepped<Matrix> midpoint_stiefel_step(const StreamSolver& solver, const Matrix& u, const Matrix& s0, double dt,
                                             const FixedPointConfig& cfg = {}) {
  if (u.rows() != solver.size() || s0.rows() != u.cols())
    throw std::invalid_argument("midpoint_stiefel_step: shape mismatch");
  const auto t0 = detail::Clock::now();
  const double c = dt / (2.0 * hbar(solver.size()));
  auto next = [&](const Matrix& ut) { return Matrix(u - c * solver(ut, s0).mul(ut)); };
  auto [ut, rep] = detail::fixed_point(u, u.norm(), cfg, next);
  Matrix out = ut - c * solver(ut, s0).mul(ut);
  rep.wall = detail::Clock::now() - t0;
  return {std::move(out), rep};
}

/// U-substep of the splitting: U' = -hbar^{-1} (I - UU^*) P(U S U^*) U, S frozen.
inline Matrix splitting_u_step(const StreamSolver& solver, const Matrix& u, const Matrix& s, double dt,
                               const ButcherTableau& tab) {
  if (u.rows() != solver.size() || s.rows() != u.cols()) throw std::invalid_argument("splitting_u_step: shape mismatch");
  const double inv_hb = 1.0 / hbar(solver.size());
  return rkmk_generic(u, dt, tab, [&](const Matrix& x) {
    const Matrix pu = solver(x, s).mul(x);
    return Matrix(-inv_hb * (pu - x * (x.adjoint() * pu)));
  });
}

/// Projected stream map S -> U^* P(U S U^*) U on u(r).
inline Matrix projected_stream(const StreamSolver& solver, const Matrix& u, const Matrix& s) {
  return u.adjoint() * solver(u, s).mul(u);
}

/// S-substep: Iso2 on u(r) with the projected stream map, U frozen.
inline Stepped<Matrix> splitting_s_step(const StreamSolver& solver, const Matrix& s, const Matrix& u, double dt,
                                        const FixedPointConfig& cfg = {}) {
  if (u.rows() != solver.size() || s.rows() != u.cols()) throw std::invalid_argument("splitting_s_step: shape mismatch");
  return detail::iso2_generic(s, dt, hbar(solver.size()), cfg,
                              [&](const Matrix& x) { return projected_stream(solver, u, x); });
}

struct StrangConfig {
  ButcherTableau tableau = ButcherTableau::heun();
  FixedPointConfig fixed_point;
};

/// U half step (S frozen), S full step (U_{1/2} frozen), U half step (new S).
inline Stepped<SpectralFactorization> strang_step(const StreamSolver& solver, const SpectralFactorization& f, double dt,
                                                  const StrangConfig& cfg = {}) {
  const auto t0 = detail::Clock::now();
  const Matrix u_half = splitting_u_step(solver, f.u, f.s, 0.5 * dt, cfg.tableau);
  auto s_step = splitting_s_step(solver, f.s, u_half, dt, cfg.fixed_point);
  SpectralFactorization out;
  out.u = splitting_u_step(solver, u_half, s_step.value, 0.5 * dt, cfg.tableau);
  out.s = std::move(s_step.value);
  StepReport rep = s_step.report;
  rep.wall = detail::Clock::now() - t0;
  return {std::move(out), rep};
}

/// Classical RK4 on W' = -[P(W), W]_N with the full stream map. Reference
/// solutions only; not structure preserving.
inline Matrix rk4_reference_step(const StreamSolver& solver, const Matrix& w, double dt) {
  const double inv_hb = 1.0 / hbar(solver.size());
  auto f = [&](const Matrix& x) {
    const Matrix p = solve_stream(solver.blocks(), x);
    return Matrix(-inv_hb * (p * x - x * p));
  };
  const Matrix k1 = f(w);
  const Matrix k2 = f(w + 0.5 * dt * k1);
  const Matrix k3 = f(w + 0.5 * dt * k2);
  const Matrix k4 = f(w + dt * k3);
  return w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace zeitlin
