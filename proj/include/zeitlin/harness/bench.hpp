#pragma once

// Timing harness for the complexity statements: median-of-reps wall time per
// operation over a size ladder, with a log-log slope fit.

#include <algorithm>
#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "zeitlin/harness/config.hpp"
#include "zeitlin/harness/fit.hpp"
#include "zeitlin/integrators.hpp"
#include "zeitlin/scenarios.hpp"
#include "zeitlin/stream_solver.hpp"

namespace zeitlin::harness {

struct BenchReport {
  std::string kind;
  std::vector<int> sizes;
  std::vector<double> seconds;  // median time per operation
  std::vector<double> mean_iterations;
  LogLogFit fit;
};

namespace detail {

/// Median over `reps` batches of the time per call; each batch repeats the
/// call until it has run for at least `min_batch` seconds.
inline double time_per_call(const std::function<void()>& call, int reps, double min_batch) {
  using clock = std::chrono::steady_clock;
  call();  // warmup
  std::vector<double> samples;
  for (int rep = 0; rep < reps; ++rep) {
    long count = 0;
    const auto t0 = clock::now();
    double elapsed = 0.0;
    do {
      call();
      ++count;
      elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    } while (elapsed < min_batch);
    samples.push_back(elapsed / static_cast<double>(count));
  }
  std::nth_element(samples.begin(), samples.begin() + static_cast<long>(samples.size() / 2), samples.end());
  return samples[samples.size() / 2];
}

inline Matrix bench_state(int n, std::uint64_t seed) {
  ScenarioSpec s;
  s.n = n;
  s.seed = seed;
  s.lo = 1e-3;
  s.hi = 1.0;
  return random_spectrum_ic(s);
}

}  // namespace detail

/// Kinds: stream, stream-truncated, iso2, rkmk2, midpoint. Implicit schemes
/// use dt = 0.05 / N so the fixed-point contraction factor, and with it the
/// iteration count, stays level across sizes.
inline BenchReport run_bench(const BenchConfig& cfg) {
  if (cfg.sizes.size() < 2) throw ConfigError("bench: need at least two sizes");
  for (std::size_t i = 1; i < cfg.sizes.size(); ++i)
    if (cfg.sizes[i] <= cfg.sizes[i - 1]) throw ConfigError("bench: sizes must be strictly increasing");
  if (cfg.reps < 1) throw ConfigError("bench: reps must be positive");
  BenchReport rep;
  rep.kind = cfg.kind;
  std::vector<double> xs;
  for (int n : cfg.sizes) {
    const Matrix w = detail::bench_state(n, 12345);
    double iters = 0.0;
    long calls = 0;
    std::function<void()> call;
    const StreamSolver full(n);
    std::optional<StreamSolver> truncated;
    const double dt = 0.05 / static_cast<double>(n);
    const int rank = std::min(cfg.rank, n);
    SpectralFactorization f;
    if (cfg.kind == "rkmk2" || cfg.kind == "midpoint") f = truncated_eig(w, rank).factors;
    Matrix sink;
    if (cfg.kind == "stream") {
      call = [&] { solve_stream_into(full.blocks(), w, sink); };
    } else if (cfg.kind == "stream-truncated") {
      truncated.emplace(n, TruncationOrder{std::min(cfg.n_trunc, n - 1)});
      call = [&] { static_cast<void>(truncated->operator()(w)); };
    } else if (cfg.kind == "iso2") {
      call = [&] {
        auto out = iso2_step(full, w, dt);
        iters += out.report.iterations;
        ++calls;
      };
    } else if (cfg.kind == "rkmk2") {
      call = [&] { sink = rkmk_step(full, f.u, f.s, dt, ButcherTableau::heun()); };
    } else if (cfg.kind == "midpoint") {
      call = [&] {
        auto out = midpoint_stiefel_step(full, f.u, f.s, dt);
        iters += out.report.iterations;
        ++calls;
      };
    } else {
      throw ConfigError("bench: unknown kind '" + cfg.kind + "'");
    }
    rep.seconds.push_back(detail::time_per_call(call, cfg.reps, cfg.min_batch_seconds));
    rep.mean_iterations.push_back(calls > 0 ? iters / static_cast<double>(calls) : 0.0);
    rep.sizes.push_back(n);
    xs.push_back(static_cast<double>(n));
  }
  rep.fit = fit_loglog(xs, rep.seconds);
  return rep;
}

}  // namespace zeitlin::harness
