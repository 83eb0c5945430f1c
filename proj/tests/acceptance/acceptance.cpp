// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Run from any directory; scratch files go to a temporary directory.
//
//   acceptance            all criteria
//   acceptance 4 7        selected criteria

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "zeitlin/diagnostics.hpp"
#include "zeitlin/harness/bench.hpp"
#include "zeitlin/harness/config.hpp"
#include "zeitlin/harness/run.hpp"
#include "zeitlin/integrators.hpp"
#include "zeitlin/io.hpp"
#include "zeitlin/quantization.hpp"
#include "zeitlin/scenarios.hpp"
#include "zeitlin/stream_solver.hpp"

using namespace zeitlin;
using namespace zeitlin::harness;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string sci(double x) { return fmt("%.3e", x); }

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("zeitlin_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

Matrix random_skew(int n, Rng& rng) {
  Matrix a(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double re = rng.normal(), im = rng.normal();
      a(i, j) = Complex(re, im);
    }
  return skew_part(a);
}

ScenarioSpec random_spectrum(int n) {
  ScenarioSpec s;
  s.n = n;
  return s;
}

ScenarioSpec blobs(int n) {
  ScenarioSpec s;
  s.kind = ScenarioKind::vortex_blobs;
  s.n = n;
  s.seed = 7;
  return s;
}

// 1. Basis orthonormality and single-diagonal support.
Outcome basis_validity() {
  double ortho = 0.0, support = 0.0;
  for (int n : {8, 16, 32}) {
    const auto basis = Basis::shared(n);
    const int dim = n * n;
    Matrix cols(dim, dim);  // column a is vec(T_a)
    for (int a = 0; a < dim; ++a) {
      const HarmonicIndex idx = HarmonicIndex::from_flat(a);
      const Matrix t = basis->at_flat(a).dense();
      cols.col(a) = Eigen::Map<const Vector>(t.data(), dim);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i - j != -idx.m) support = std::max(support, std::abs(t(i, j)));
    }
    Matrix gram = (kFourPi / n) * (cols.adjoint() * cols);
    gram -= Matrix::Identity(dim, dim);
    ortho = std::max(ortho, gram.cwiseAbs().maxCoeff());
  }
  return {ortho < 1e-10 && support < 1e-15, "max |gram - I| " + sci(ortho) + ", off-support " + sci(support)};
}

// 2. Laplacian eigen-identity for every N <= 32 and the kernel.
Outcome laplacian_identity() {
  double worst = 0.0;
  bool kernel_exact = true;
  for (int n = 2; n <= 32; ++n) {
    const auto basis = Basis::shared(n);
    for (int a = 0; a < n * n; ++a) {
      const HarmonicIndex idx = HarmonicIndex::from_flat(a);
      const Matrix t = basis->at_flat(a).dense();
      const double ev = -static_cast<double>(idx.ell * (idx.ell + 1));
      const Matrix res = apply_laplacian(t) - ev * t;
      const double scale = idx.ell == 0 ? t.norm() : std::abs(ev) * t.norm();
      worst = std::max(worst, res.norm() / scale);
    }
    const Matrix id = kI * Matrix::Identity(n, n);
    const StreamSolver solver(n);
    kernel_exact = kernel_exact && apply_laplacian(id).norm() == 0.0 && solver(id).dense().norm() == 0.0;
  }
  return {worst < 1e-9 && kernel_exact,
          "max relative residual " + sci(worst) + (kernel_exact ? ", kernel exact" : ", kernel NOT exact")};
}

// 3. Delta(P(W)) = W - tr(W)/N I on 100 random states.
Outcome stream_inverse() {
  double worst = 0.0;
  for (int n : {8, 32}) {
    const StreamSolver solver(n);
    Rng rng(2024, static_cast<std::uint64_t>(n));
    for (int k = 0; k < 100; ++k) {
      const Matrix w = random_skew(n, rng);
      const Matrix target = w - (w.trace() / static_cast<double>(n)) * Matrix::Identity(n, n);
      const Matrix p = solver(w).dense();
      worst = std::max(worst, (apply_laplacian(p) - target).norm() / target.norm());
    }
  }
  return {worst < 1e-11, "max relative residual " + sci(worst)};
}

// 4. Fitted convergence orders against a dense RK4 reference.
Outcome convergence_orders() {
  RunConfig cfg;
  cfg.scenario = random_spectrum(16);
  cfg.n = cfg.r = 16;
  cfg.dt = 0.01;
  cfg.t_final = 1.0;
  cfg.convergence.dts = {0.01, 0.005, 0.0025, 0.00125};
  cfg.convergence.integrators = {IntegratorKind::rkmk1, IntegratorKind::rkmk2, IntegratorKind::iso2,
                                 IntegratorKind::strang};
  cfg.convergence.reference_dt = 1e-5;
  const ConvergenceResult res = run_convergence(cfg);
  struct Band {
    IntegratorKind k;
    double lo, hi;
  };
  bool ok = true;
  std::string detail;
  for (const Band& b : {Band{IntegratorKind::rkmk1, 0.8, 1.2}, Band{IntegratorKind::rkmk2, 1.8, 2.2},
                        Band{IntegratorKind::iso2, 1.8, 2.2}, Band{IntegratorKind::strang, 1.8, 2.2}}) {
    const OrderFit& o = res.order(b.k);
    const bool in = o.applicable && o.fit.slope >= b.lo && o.fit.slope <= b.hi;
    ok = ok && in;
    detail += to_string(b.k) + " " + fmt("%.3f", o.fit.slope) + (in ? "" : " (out of band)") + ", ";
  }
  detail.resize(detail.size() - 2);
  return {ok, "slopes " + detail};
}

// 5. Spectrum drift of dense Iso2 and of the reconstructed low-rank states.
Outcome isospectrality() {
  const int n = 16, r = 4;
  const double dt = 1e-2;
  const Matrix w0 = initial_condition(random_spectrum(n));
  const StreamSolver solver(n);
  const Vector lambda0 = sorted_spectrum(w0);
  Matrix w = w0;
  double dense_drift = 0.0;
  for (int k = 0; k < 1000; ++k) {
    w = iso2_step(solver, w, dt).value;
    dense_drift = std::max(dense_drift, spectrum_drift(lambda0, w));
  }
  const SpectralFactorization f0 = truncated_eig(w0, r).factors;
  const Vector lowrank0 = sorted_spectrum(reconstruct(f0));
  Matrix u_rk = f0.u, u_mp = f0.u;
  double rk_drift = 0.0, mp_drift = 0.0;
  for (int k = 0; k < 1000; ++k) {
    u_rk = rkmk_step(solver, u_rk, f0.s, dt, ButcherTableau::heun());
    u_mp = midpoint_stiefel_step(solver, u_mp, f0.s, dt).value;
    rk_drift = std::max(rk_drift, spectrum_drift(lowrank0, reconstruct({u_rk, f0.s})));
    mp_drift = std::max(mp_drift, spectrum_drift(lowrank0, reconstruct({u_mp, f0.s})));
  }
  return {dense_drift < 1e-8 && rk_drift < 1e-10 && mp_drift < 1e-10,
          "iso2 " + sci(dense_drift) + ", rkmk2 " + sci(rk_drift) + ", midpoint " + sci(mp_drift)};
}

// 6. |C_k(W) - C_k(svd_r(W))| = (4 pi / N) |sum_{j>r} lambda_j^k|.
Outcome casimir_identity() {
  const int n = 16;
  const Matrix w = initial_condition(random_spectrum(n));
  const Vector lambda = sorted_spectrum(w);
  const RealVector cw = casimirs(w, 5);
  double worst = 0.0;
  for (int r : {4, 8, 12}) {
    const RealVector cy = casimirs(best_rank_approximation(w, r), 5);
    for (int k = 1; k <= 5; ++k) {
      Complex tail = 0.0, scale = 0.0;
      for (int j = r; j < n; ++j) tail += std::pow(lambda(j), k);
      for (int j = 0; j < n; ++j) scale += std::pow(std::abs(lambda(j)), k);
      const double lhs = std::abs(cw(k - 1) - cy(k - 1));
      const double rhs = kFourPi / n * std::abs(tail);
      worst = std::max(worst, std::abs(lhs - rhs) / (kFourPi / n * scale.real()));
    }
  }
  return {worst < 1e-12, "max mismatch relative to (4pi/N) sum |lambda|^k: " + sci(worst)};
}

// Shared by 7 and 11: dense RK4 reference for the blobs at T = 10.
Matrix blob_reference(const RunConfig& cfg, const Matrix& w0) {
  const double dt_ref = cfg.dt / static_cast<double>(cfg.blobs.reference_dt_divisor);
  return cached_reference(cfg.output_dir, cfg.scenario, w0, cfg.t_final, dt_ref);
}

RunConfig blob_config() {
  RunConfig cfg;
  cfg.scenario = blobs(32);
  cfg.n = 32;
  cfg.r = 4;
  cfg.dt = 1e-2;
  cfg.t_final = 10.0;
  cfg.fixed_point.tol = 1e-14;
  cfg.diag_every = 10;
  cfg.output_dir = (scratch() / "blobs").string();
  return cfg;
}

// 7. Low-rank RK-MK2 on the rank-4 blobs stays within 10x of the dense error.
Outcome rank_exactness() {
  RunConfig cfg = blob_config();
  const Matrix w0 = initial_condition(cfg.scenario);
  const Matrix ref = blob_reference(cfg, w0);
  cfg.integrator = IntegratorKind::iso2;
  Simulation dense(cfg, w0);
  cfg.integrator = IntegratorKind::rkmk2;
  Simulation low(cfg, w0);
  for (long k = 0; k < cfg.steps(); ++k) {
    dense.step();
    low.step();
  }
  const double gap = frobenius_error(dense.state(), low.factors());
  const double dense_err = frobenius_error(ref, dense.state());
  return {gap <= 10.0 * dense_err, "||Y_rkmk2 - W_iso2|| " + sci(gap) + ", dense error " + sci(dense_err) +
                                       ", ratio " + fmt("%.2f", gap / dense_err)};
}

// 8. Midpoint on the Stiefel manifold reproduces Iso2 at full rank.
Outcome midpoint_equivalence() {
  const int n = 8;
  const Matrix w0 = initial_condition(random_spectrum(n));
  const StreamSolver solver(n);
  const FixedPointConfig fp{1e-14, 100};
  const SpectralFactorization f0 = truncated_eig(w0, n).factors;
  Matrix w = reconstruct(f0), u = f0.u;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    w = iso2_step(solver, w, 1e-2, fp).value;
    u = midpoint_stiefel_step(solver, u, f0.s, 1e-2, fp).value;
    worst = std::max(worst, frobenius_error(w, SpectralFactorization{u, f0.s}));
  }
  return {worst < 1e-10, "max trajectory distance " + sci(worst)};
}

// 9. Truncated stream: bitwise at N~ = N - 1, commutation, H~ drift order.
Outcome truncation_consistency() {
  bool bitwise = true;
  double commute = 0.0;
  for (int n : {8, 16, 32}) {
    Rng rng(99, static_cast<std::uint64_t>(n));
    const Matrix w = random_skew(n, rng);
    const StreamSolver full(n), same(n, TruncationOrder{n - 1});
    const Matrix a = full(w).dense(), b = same(w).dense();
    bitwise = bitwise && (a.array() == b.array()).all();
    for (int nt : {1, n / 4, n / 2}) {
      const Matrix lhs = truncate_diagonals(solve_stream(full.blocks(), w), {nt});
      const Matrix rhs = solve_stream(full.blocks(), truncate_diagonals(w, {nt}));
      commute = std::max(commute, (lhs - rhs).norm() / std::max(lhs.norm(), 1e-300));
    }
  }
  const int n = 16;
  const StreamSolver trunc(n, TruncationOrder{4});
  const Matrix w0 = initial_condition(random_spectrum(n));
  const double h0 = hamiltonian(trunc, w0);
  auto drift = [&](double dt) {
    Matrix w = w0;
    double worst = 0.0;
    for (long k = 0; k < std::lround(1.0 / dt); ++k) {
      w = iso2_step(trunc, w, dt, {1e-14, 100}).value;
      worst = std::max(worst, std::abs(hamiltonian(trunc, w) - h0));
    }
    return worst;
  };
  const double d1 = drift(0.01), d2 = drift(0.005);
  const double ratio = d1 / d2;
  return {bitwise && commute < 1e-12 && ratio >= 3.0 && ratio <= 5.0,
          std::string(bitwise ? "bitwise" : "NOT bitwise") + ", commutation " + sci(commute) + ", H~ drift " +
              sci(d1) + " -> " + sci(d2) + " (ratio " + fmt("%.2f", ratio) + ")"};
}

// 10. Measured cost exponents.
Outcome complexity() {
  struct Case {
    const char* kind;
    std::vector<int> sizes;
    double lo, hi;
  };
  const std::vector<Case> cases = {{"stream", {128, 256, 512, 1024}, 1.7, 2.3},
                                   {"stream-truncated", {128, 256, 512, 1024}, 0.8, 1.4},
                                   {"iso2", {64, 128, 256, 512}, 2.6, 3.4},
                                   {"rkmk2", {128, 256, 512, 1024}, 1.7, 2.3}};
  bool ok = true;
  std::string detail;
  for (const Case& c : cases) {
    BenchConfig b;
    b.kind = c.kind;
    b.sizes = c.sizes;
    b.reps = 5;
    b.n_trunc = 8;
    b.rank = 4;
    b.min_batch_seconds = 0.2;
    const BenchReport rep = run_bench(b);
    const bool in = rep.fit.slope >= c.lo && rep.fit.slope <= c.hi;
    ok = ok && in;
    detail += std::string(c.kind) + " " + fmt("%.2f", rep.fit.slope) + (in ? "" : " (out of band)") + ", ";
  }
  detail.resize(detail.size() - 2);
  return {ok, "slopes " + detail};
}

// 11. Three-column blob table; Casimirs and Hamiltonian orderings.
Outcome blob_table() {
  const RunConfig cfg = blob_config();
  const BlobsResult res = run_blobs(cfg);
  const bool produced = res.columns.size() == 3 && fs::exists(fs::path(cfg.output_dir) / "blobs_table.csv");
  if (!produced) return {false, "table not produced"};
  const BlobsColumn &s0 = res.columns[1], &st = res.columns[2];
  const bool casimirs_ok = s0.max_casimir_drift < 1e-10 && st.max_casimir_drift < 1e-10;
  const bool h_ok = st.max_normalized_h_error <= 10.0 * s0.max_normalized_h_error;
  return {casimirs_ok && h_ok,
          "C_k drift S0 " + sci(s0.max_casimir_drift) + ", S(t) " + sci(st.max_casimir_drift) + "; N/4pi H drift S0 " +
              sci(s0.max_normalized_h_error) + ", S(t) " + sci(st.max_normalized_h_error) + ", iso2 " +
              sci(res.columns[0].max_normalized_h_error)};
}

// 12. Bit-exact checkpoints and a stable CSV schema.
Outcome round_trip_io() {
  const fs::path dir = scratch() / "io";
  fs::create_directories(dir);
  const Matrix w = initial_condition(random_spectrum(12));
  const SpectralFactorization f = truncated_eig(w, 5).factors;
  write_checkpoint((dir / "w.ckpt").string(), w);
  write_checkpoint((dir / "f.ckpt").string(), f);
  const Checkpoint cw = read_checkpoint((dir / "w.ckpt").string());
  const Checkpoint cf = read_checkpoint((dir / "f.ckpt").string());
  const bool exact = cw.dense && (cw.dense->array() == w.array()).all() && cf.factors &&
                     (cf.factors->u.array() == f.u.array()).all() && (cf.factors->s.array() == f.s.array()).all();

  RunConfig cfg;
  cfg.scenario = random_spectrum(8);
  cfg.n = 8;
  cfg.r = 3;
  cfg.integrator = IntegratorKind::strang;
  cfg.dt = 0.01;
  cfg.t_final = 0.1;
  auto csv_without_wall = [&](const std::string& sub) {
    cfg.output_dir = (dir / sub).string();
    run_simulate(cfg);
    std::ifstream is(fs::path(cfg.output_dir) / "diagnostics.csv");
    std::string line, out;
    while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  const std::string a = csv_without_wall("a"), b = csv_without_wall("b");
  const std::string header = csv_header(cfg.k_max);
  const bool stable = !a.empty() && a == b && a.rfind(header.substr(0, header.rfind(',')) + "\n", 0) == 0;
  return {exact && stable,
          std::string(exact ? "checkpoints bit-exact" : "checkpoint MISMATCH") + ", " +
              (stable ? "CSV identical across runs" : "CSV differs across runs")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no stated budget
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "basis validity", 30, basis_validity},
      {2, "Laplacian spectral identity", 30, laplacian_identity},
      {3, "stream-solver inverse property", 10, stream_inverse},
      {4, "convergence orders", 300, convergence_orders},
      {5, "isospectrality", 120, isospectrality},
      {6, "Casimir error identity", 10, casimir_identity},
      {7, "rank exactness on vortex blobs", 300, rank_exactness},
      {8, "midpoint/Iso2 equivalence", 0, midpoint_equivalence},
      {9, "truncated-stream consistency", 0, truncation_consistency},
      {10, "complexity exponents", 900, complexity},
      {11, "blob comparison table", 0, blob_table},
      {12, "round-trip I/O", 0, round_trip_io},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_seconds == 0 || secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] criterion %d: %s: %s; %.1f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                in_time ? "" : " (over time budget)");
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(scratch(), ec);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
