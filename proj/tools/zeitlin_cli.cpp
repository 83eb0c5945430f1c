// zeitlin: command-line front end for the simulation harness.
//
//   zeitlin simulate    --config run.json [--output dir] [--seed s] [--snapshot-times 0,1.5]
//   zeitlin convergence --config run.json [--output dir]
//   zeitlin bench       --config run.json [--kind stream] [--output dir]
//   zeitlin blobs       --config run.json [--output dir]
//   zeitlin basis-check [--sizes 8,16,32]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "zeitlin/harness/bench.hpp"
#include "zeitlin/harness/config.hpp"
#include "zeitlin/harness/run.hpp"
#include "zeitlin/quantization.hpp"
#include "zeitlin/stream_solver.hpp"

namespace {

using namespace zeitlin;
using namespace zeitlin::harness;

struct CommonOptions {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::vector<double> snapshot_times;
};

RunConfig resolve(const CommonOptions& opt) {
  RunConfig cfg = opt.config.empty() ? RunConfig{} : load_config(opt.config);
  if (!opt.output.empty()) cfg.output_dir = opt.output;
  if (opt.seed) cfg.scenario.seed = *opt.seed;
  if (!opt.snapshot_times.empty()) cfg.snapshot_times = opt.snapshot_times;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, CommonOptions& opt) {
  sub->add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--output", opt.output, "Output directory (overrides output_dir)");
  sub->add_option("--seed", opt.seed, "Scenario seed (overrides scenario.seed)");
  sub->add_option("--threads", opt.threads, "Thread count for dense linear algebra")->check(CLI::PositiveNumber);
  sub->add_option("--snapshot-times", opt.snapshot_times, "Comma-separated field snapshot times")->delimiter(',');
}

int cmd_simulate(const CommonOptions& opt) {
  const RunConfig cfg = resolve(opt);
  const SimulationOutcome out = run_simulate(cfg);
  const DiagnosticsRecord& last = out.records.back();
  std::printf("t=%g  H=%.12g  eig_drift=%.3e  steps_s=%.3f\n", last.time, last.hamiltonian, last.eig_drift,
              out.stepping_seconds);
  if (out.degenerate_cut) std::fprintf(stderr, "warning: sigma_r == sigma_{r+1}; rank cut is not unique\n");
  if (!cfg.output_dir.empty()) std::printf("wrote %zu artifacts to %s\n", out.artifacts.size() + 1, cfg.output_dir.c_str());
  return 0;
}

int cmd_convergence(const CommonOptions& opt) {
  const RunConfig cfg = resolve(opt);
  const ConvergenceResult res = run_convergence(cfg);
  std::printf("reference dt = %g%s\n", res.reference_dt, res.reference_reused ? " (cached)" : "");
  std::printf("%-10s %-12s %s\n", "scheme", "dt", "error");
  for (const auto& r : res.rows) std::printf("%-10s %-12g %.6e\n", to_string(r.integrator).c_str(), r.dt, r.error);
  for (const auto& o : res.orders) {
    if (o.applicable)
      std::printf("order %-8s slope %.3f  r2 %.4f\n", to_string(o.integrator).c_str(), o.fit.slope, o.fit.r2);
    else
      std::printf("order %-8s not applicable (errors at roundoff)\n", to_string(o.integrator).c_str());
  }
  return 0;
}

int cmd_bench(const CommonOptions& opt, const std::string& kind, const std::vector<int>& sizes) {
  RunConfig cfg = resolve(opt);
  if (!kind.empty()) cfg.bench.kind = kind;
  if (!sizes.empty()) cfg.bench.sizes = sizes;
  const BenchReport rep = run_bench(cfg.bench);
  std::string csv = "N,seconds,mean_iterations\n";
  for (std::size_t i = 0; i < rep.sizes.size(); ++i) {
    std::printf("N=%-6d %.6e s  iters %.1f\n", rep.sizes[i], rep.seconds[i], rep.mean_iterations[i]);
    csv += std::to_string(rep.sizes[i]) + "," + format_double(rep.seconds[i]) + "," +
           format_double(rep.mean_iterations[i]) + "\n";
  }
  std::printf("%s: slope %.3f  r2 %.4f\n", rep.kind.c_str(), rep.fit.slope, rep.fit.r2);
  if (!cfg.output_dir.empty()) {
    harness::detail::ensure_dir(cfg.output_dir);
    const std::string name = "bench_" + rep.kind + ".csv";
    harness::detail::write_text((std::filesystem::path(cfg.output_dir) / name).string(), csv);
    write_manifest(cfg, "bench", {name}, {{"slope", rep.fit.slope}, {"r2", rep.fit.r2}});
  }
  return 0;
}

int cmd_blobs(const CommonOptions& opt) {
  RunConfig cfg = resolve(opt);
  if (cfg.scenario.kind != ScenarioKind::vortex_blobs) throw ConfigError("blobs: scenario kind must be vortex-blobs");
  const BlobsResult res = run_blobs(cfg);
  std::printf("%-36s", "");
  for (const auto& c : res.columns) std::printf(" | %-22s", c.name.c_str());
  std::printf("\n");
  auto row = [&](const char* label, auto get) {
    std::printf("%-36s", label);
    for (const auto& c : res.columns) std::printf(" | %-22.3e", get(c));
    std::printf("\n");
  };
  row("||W_ref(T) - Omega(T)||_F", [](const BlobsColumn& c) { return c.frobenius_error; });
  row("N/(4pi) max |H(W_ref(t0)) - H(t)|", [](const BlobsColumn& c) { return c.max_normalized_h_error; });
  row("max Casimir drift", [](const BlobsColumn& c) { return c.max_casimir_drift; });
  row("Runtime [s]", [](const BlobsColumn& c) { return c.runtime_seconds; });
  return 0;
}

int cmd_basis_check(const std::vector<int>& sizes) {
  bool ok = true;
  for (int n : sizes) {
    const auto basis = Basis::shared(n);
    double ortho = 0.0, support = 0.0, lap = 0.0;
    std::vector<Matrix> dense;
    for (int f = 0; f < n * n; ++f) dense.push_back((*basis).at_flat(f).dense());
    for (int a = 0; a < n * n; ++a) {
      const HarmonicIndex ia = HarmonicIndex::from_flat(a);
      for (int b = 0; b < n * n; ++b) {
        const Complex g = kFourPi / n * (dense[a].adjoint() * dense[b]).trace();
        ortho = std::max(ortho, std::abs(g - (a == b ? 1.0 : 0.0)));
      }
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i - j != -ia.m) support = std::max(support, std::abs(dense[a](i, j)));
      const double ev = -static_cast<double>(ia.ell * (ia.ell + 1));
      lap = std::max(lap, (apply_laplacian(dense[a]) - ev * dense[a]).norm() / std::max(1.0, std::abs(ev)));
    }
    const bool pass = ortho < 1e-10 && support < 1e-15 && lap < 1e-9;
    ok = ok && pass;
    std::printf("N=%-4d orthonormality %.2e  off-support %.2e  laplacian %.2e  %s\n", n, ortho, support, lap,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-preserving low-rank Zeitlin simulations"};
  app.require_subcommand(1);
  CommonOptions opt;
  std::string bench_kind;
  std::vector<int> bench_sizes;
  std::vector<int> check_sizes{8, 16, 32};

  auto* simulate = app.add_subcommand("simulate", "Integrate one configuration and write diagnostics");
  add_common(simulate, opt);
  auto* convergence = app.add_subcommand("convergence", "Errors against a dense RK4 reference and fitted orders");
  add_common(convergence, opt);
  auto* bench = app.add_subcommand("bench", "Time an operation over a size ladder and fit the exponent");
  add_common(bench, opt);
  bench->add_option("--kind", bench_kind, "stream, stream-truncated, iso2, rkmk2 or midpoint");
  bench->add_option("--sizes", bench_sizes, "Comma-separated sizes")->delimiter(',');
  auto* blobs = app.add_subcommand("blobs", "Dense vs. low-rank comparison on the vortex-blob scenario");
  add_common(blobs, opt);
  auto* check = app.add_subcommand("basis-check", "Verify basis orthonormality, support and Laplacian eigenvalues");
  check->add_option("--sizes", check_sizes, "Comma-separated N values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Eigen::setNbThreads(opt.threads);
  try {
    if (*simulate) return cmd_simulate(opt);
    if (*convergence) return cmd_convergence(opt);
    if (*bench) return cmd_bench(opt, bench_kind, bench_sizes);
    if (*blobs) return cmd_blobs(opt);
    if (*check) return cmd_basis_check(check_sizes);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  return 0;
}
