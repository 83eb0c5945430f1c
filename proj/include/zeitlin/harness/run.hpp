#pragma once

// Experiment drivers: single simulations with diagnostics and artifacts,
// convergence studies against a dense RK4 reference, and the blob
// comparison table.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "zeitlin/diagnostics.hpp"
#include "zeitlin/harness/config.hpp"
#include "zeitlin/harness/fit.hpp"
#include "zeitlin/integrators.hpp"
#include "zeitlin/io.hpp"
#include "zeitlin/quantization.hpp"
#include "zeitlin/scenarios.hpp"
#include "zeitlin/state.hpp"

namespace zeitlin::harness {

namespace fs = std::filesystem;

/// One integrator advancing one state. Dense for iso2, factored otherwise.
class Simulation {
 public:
  Simulation(const RunConfig& cfg, const Matrix& w0)
      : cfg_(cfg),
        solver_(cfg.n, cfg.n_trunc ? std::optional<TruncationOrder>(TruncationOrder{*cfg.n_trunc}) : std::nullopt),
        tableau_(ButcherTableau::by_name(cfg.integrator == IntegratorKind::rkmk1 ? "euler" : cfg.tableau)) {
    if (w0.rows() != cfg.n || w0.cols() != cfg.n) throw ConfigError("simulation: initial state has the wrong size");
    if (cfg.integrator == IntegratorKind::iso2) {
      w_ = w0;
    } else {
      const TruncatedEig te = truncated_eig(w0, cfg.r);
      f_ = te.factors;
      degenerate_cut_ = te.degenerate_cut;
    }
  }

  void step() {
    const double dt = cfg_.dt;
    switch (cfg_.integrator) {
      case IntegratorKind::iso2: {
        auto out = iso2_step(solver_, *w_, dt, cfg_.fixed_point);
        w_ = std::move(out.value);
        last_ = out.report;
        break;
      }
      case IntegratorKind::rkmk1:
      case IntegratorKind::rkmk2: {
        const auto t0 = std::chrono::steady_clock::now();
        const ButcherTableau tab =
            cfg_.integrator == IntegratorKind::rkmk1 ? ButcherTableau::euler() : ButcherTableau::heun();
        f_->u = rkmk_step(solver_, f_->u, f_->s, dt, tab);
        last_ = StepReport{0, 0.0, std::chrono::steady_clock::now() - t0};
        break;
      }
      case IntegratorKind::midpoint: {
        auto out = midpoint_stiefel_step(solver_, f_->u, f_->s, dt, cfg_.fixed_point);
        f_->u = std::move(out.value);
        last_ = out.report;
        break;
      }
      case IntegratorKind::strang: {
        auto out = strang_step(solver_, *f_, dt, {tableau_, cfg_.fixed_point});
        f_ = std::move(out.value);
        last_ = out.report;
        break;
      }
    }
    ++steps_;
  }

  [[nodiscard]] double time() const { return static_cast<double>(steps_) * cfg_.dt; }
  [[nodiscard]] long steps() const { return steps_; }
  [[nodiscard]] bool factored() const { return f_.has_value(); }
  [[nodiscard]] const SpectralFactorization& factors() const { return *f_; }
  [[nodiscard]] Matrix state() const { return f_ ? reconstruct(*f_) : *w_; }
  [[nodiscard]] const StepReport& last_report() const { return last_; }
  [[nodiscard]] bool degenerate_cut() const { return degenerate_cut_; }
  [[nodiscard]] const StreamSolver& solver() const { return solver_; }

 private:
  RunConfig cfg_;
  StreamSolver solver_;
  ButcherTableau tableau_;
  std::optional<Matrix> w_;
  std::optional<SpectralFactorization> f_;
  StepReport last_;
  long steps_ = 0;
  bool degenerate_cut_ = false;
};

/// Record of the current state: full Hamiltonian, Casimirs, spectrum drift
/// against `reference_spectrum` and optionally the error against `reference`.
inline DiagnosticsRecord make_record(const Simulation& sim, const StreamSolver& full, const Vector& reference_spectrum,
                                     int k_max, double wall_ms, const Matrix* reference = nullptr) {
  DiagnosticsRecord rec;
  rec.time = sim.time();
  rec.wall_ms = wall_ms;
  const int n = full.size();
  if (sim.factored()) {
    const SpectralFactorization& f = sim.factors();
    rec.hamiltonian = hamiltonian(full, f);
    rec.casimirs = casimirs(f, k_max);
    rec.eigenvalues = factored_spectrum(f);
    if (reference) rec.frobenius_error_vs_reference = frobenius_error(*reference, f);
  } else {
    const Matrix w = sim.state();
    rec.hamiltonian = hamiltonian(full, w);
    rec.eigenvalues = sorted_spectrum(w);
    rec.casimirs = casimirs_from_spectrum(rec.eigenvalues, k_max, n);
    if (reference) rec.frobenius_error_vs_reference = frobenius_error(*reference, w);
  }
  rec.hamiltonian_normalized = static_cast<double>(n) / kFourPi * rec.hamiltonian;
  rec.eig_drift = spectrum_distance(reference_spectrum, rec.eigenvalues);
  return rec;
}

struct SimulationOutcome {
  Matrix final_state;
  std::optional<SpectralFactorization> final_factors;
  std::vector<DiagnosticsRecord> records;
  double stepping_seconds = 0.0;
  bool degenerate_cut = false;
  std::vector<std::string> artifacts;
};

namespace detail {

inline void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + path + "'");
}

/// Config echo without the output location, so relocated runs hash alike.
inline json hashed_config(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output_dir");
  return j;
}

inline std::string format_time_tag(double t) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

}  // namespace detail

inline std::string input_hash(const RunConfig& cfg) { return git_blob_hash(canonical(detail::hashed_config(cfg))); }

inline void write_manifest(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& artifacts,
                           const json& extra = json::object()) {
  if (cfg.output_dir.empty()) return;
  json m = {{"schema_version", kSchemaVersion},
            {"command", command},
            {"config", to_json(cfg)},
            {"input_hash", input_hash(cfg)},
            {"scenario_hash", scenario_hash(cfg.scenario)},
            {"created_at", utc_timestamp()},
            {"artifacts", artifacts}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  detail::write_text((fs::path(cfg.output_dir) / "manifest.json").string(), m.dump(2) + "\n");
}

inline std::string records_csv(const std::vector<DiagnosticsRecord>& records, int k_max) {
  std::string out = csv_header(k_max) + "\n";
  for (const auto& r : records) out += csv_row(r) + "\n";
  return out;
}

/// Integrates the configured scenario. Writes diagnostics.csv, final.ckpt,
/// field snapshots and manifest.json when output_dir is set.
inline SimulationOutcome run_simulate(const RunConfig& cfg, std::optional<Matrix> initial = std::nullopt) {
  cfg.validate();
  const Matrix w0 = initial ? *initial : initial_condition(cfg.scenario);
  std::optional<Matrix> reference;
  double reference_time = -1.0;
  if (cfg.reference) {
    Checkpoint ck = read_checkpoint(*cfg.reference);
    reference = ck.dense ? *ck.dense : reconstruct(*ck.factors);
    reference_time = ck.meta.time;
    if (reference->rows() != cfg.n) throw ConfigError("reference checkpoint has the wrong size");
  }
  Simulation sim(cfg, w0);
  const StreamSolver full(cfg.n);
  const Vector ref_spectrum = sorted_spectrum(w0);
  const long steps = cfg.steps();

  std::vector<long> snapshot_steps;
  for (double t : cfg.snapshot_times) snapshot_steps.push_back(std::lround(t / cfg.dt));
  detail::ensure_dir(cfg.output_dir);

  SimulationOutcome out;
  out.degenerate_cut = sim.degenerate_cut();
  auto record = [&] {
    const bool at_ref = reference && std::abs(sim.time() - reference_time) <= 1e-9 * std::max(1.0, reference_time);
    out.records.push_back(
        make_record(sim, full, ref_spectrum, cfg.k_max, out.stepping_seconds * 1e3, at_ref ? &*reference : nullptr));
  };
  auto snapshot = [&] {
    if (cfg.output_dir.empty()) return;
    if (std::find(snapshot_steps.begin(), snapshot_steps.end(), sim.steps()) == snapshot_steps.end()) return;
    const FieldGrid g = render_field(sim.state(), cfg.grid.n_theta, cfg.grid.n_phi);
    const std::string name = "field_t" + detail::format_time_tag(sim.time()) + ".grid";
    write_field_grid((fs::path(cfg.output_dir) / name).string(), g, sim.time());
    out.artifacts.push_back(name);
  };

  record();
  snapshot();
  for (long k = 1; k <= steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    sim.step();
    out.stepping_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (k % cfg.diag_every == 0 || k == steps) record();
    snapshot();
  }
  out.final_state = sim.state();
  if (sim.factored()) out.final_factors = sim.factors();

  if (!cfg.output_dir.empty()) {
    const fs::path dir(cfg.output_dir);
    detail::write_text((dir / "diagnostics.csv").string(), records_csv(out.records, cfg.k_max));
    out.artifacts.insert(out.artifacts.begin(), "diagnostics.csv");
    CheckpointMeta meta;
    meta.time = sim.time();
    meta.created_at = utc_timestamp();
    meta.scenario_hash = scenario_hash(cfg.scenario);
    if (sim.factored())
      write_checkpoint((dir / "final.ckpt").string(), sim.factors(), meta);
    else
      write_checkpoint((dir / "final.ckpt").string(), out.final_state, meta);
    out.artifacts.insert(out.artifacts.begin() + 1, "final.ckpt");
    write_manifest(cfg, "simulate", out.artifacts,
                   {{"degenerate_rank_cut", out.degenerate_cut}, {"stepping_seconds", out.stepping_seconds}});
  }
  return out;
}

/// Dense RK4 from w0 to t_final with step dt.
inline Matrix rk4_reference(const Matrix& w0, double t_final, double dt) {
  const StreamSolver solver(static_cast<int>(w0.rows()));
  const long steps = std::lround(t_final / dt);
  Matrix w = w0;
  for (long k = 0; k < steps; ++k) w = rk4_reference_step(solver, w, dt);
  return w;
}

/// Reference at t_final, cached under `dir` as reference.ckpt next to a
/// reference.json holding the hash of its inputs; reused iff the hash matches.
inline Matrix cached_reference(const std::string& dir, const ScenarioSpec& scenario, const Matrix& w0, double t_final,
                               double dt_ref, bool* reused = nullptr) {
  const json inputs = {{"scenario", scenario_to_json(scenario)}, {"T", t_final}, {"dt", dt_ref}, {"method", "rk4"}};
  const std::string hash = git_blob_hash(canonical(inputs));
  if (reused) *reused = false;
  if (!dir.empty()) {
    const fs::path ck = fs::path(dir) / "reference.ckpt", man = fs::path(dir) / "reference.json";
    if (fs::exists(ck) && fs::exists(man)) {
      std::ifstream is(man);
      json m;
      try {
        m = json::parse(is);
      } catch (const json::exception&) {
        m = json::object();
      }
      if (m.value("hash", "") == hash) {
        Checkpoint c = read_checkpoint(ck.string());
        if (c.dense) {
          if (reused) *reused = true;
          return *c.dense;
        }
      }
    }
  }
  Matrix ref = rk4_reference(w0, t_final, dt_ref);
  if (!dir.empty()) {
    detail::ensure_dir(dir);
    CheckpointMeta meta;
    meta.time = t_final;
    meta.created_at = utc_timestamp();
    meta.scenario_hash = scenario_hash(scenario);
    write_checkpoint((fs::path(dir) / "reference.ckpt").string(), ref, meta);
    detail::write_text((fs::path(dir) / "reference.json").string(),
                       json{{"hash", hash}, {"inputs", inputs}}.dump(2) + "\n");
  }
  return ref;
}

struct ConvergenceRow {
  IntegratorKind integrator;
  double dt;
  double error;
};

struct OrderFit {
  IntegratorKind integrator;
  LogLogFit fit;
  bool applicable = true;  // false when all errors sit at roundoff level
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::vector<OrderFit> orders;
  double reference_dt = 0.0;
  bool reference_reused = false;

  [[nodiscard]] const OrderFit& order(IntegratorKind k) const {
    for (const auto& o : orders)
      if (o.integrator == k) return o;
    throw std::out_of_range("no fit for integrator " + to_string(k));
  }
};

/// Error at T of each configured integrator for each dt, against a dense RK4
/// reference, and the fitted log-log slopes.
inline ConvergenceResult run_convergence(const RunConfig& base, std::optional<Matrix> initial = std::nullopt) {
  base.validate();
  const auto& cv = base.convergence;
  if (cv.dts.size() < 3) throw ConfigError("convergence: need at least three time steps");
  const Matrix w0 = initial ? *initial : initial_condition(base.scenario);
  ConvergenceResult res;
  res.reference_dt = cv.reference_dt ? *cv.reference_dt : *std::min_element(cv.dts.begin(), cv.dts.end()) / 100.0;
  const Matrix ref = cached_reference(base.output_dir, base.scenario, w0, base.t_final, res.reference_dt,
                                      &res.reference_reused);
  const double floor = 1e-13 * std::max(1.0, w0.norm());
  for (IntegratorKind kind : cv.integrators) {
    std::vector<double> xs, ys;
    bool applicable = false;
    for (double dt : cv.dts) {
      RunConfig cfg = base;
      cfg.integrator = kind;
      cfg.dt = dt;
      cfg.output_dir.clear();
      cfg.reference.reset();
      cfg.diag_every = std::max<long>(1, cfg.steps());
      cfg.validate();
      Simulation sim(cfg, w0);
      for (long k = 0; k < cfg.steps(); ++k) sim.step();
      const double err = sim.factored() ? frobenius_error(ref, sim.factors()) : frobenius_error(ref, sim.state());
      res.rows.push_back({kind, dt, err});
      xs.push_back(dt);
      ys.push_back(std::max(err, std::numeric_limits<double>::min()));
      if (err > floor) applicable = true;
    }
    OrderFit of{kind, {}, applicable};
    if (applicable) of.fit = fit_loglog(xs, ys);
    res.orders.push_back(of);
  }
  if (!base.output_dir.empty()) {
    std::string csv = "integrator,dt,error\n";
    for (const auto& r : res.rows) csv += to_string(r.integrator) + "," + format_double(r.dt) + "," + format_double(r.error) + "\n";
    detail::write_text((fs::path(base.output_dir) / "convergence.csv").string(), csv);
    std::string orders = "integrator,slope,r2,applicable\n";
    for (const auto& o : res.orders)
      orders += to_string(o.integrator) + "," + format_double(o.fit.slope) + "," + format_double(o.fit.r2) + "," +
                (o.applicable ? "true" : "false") + "\n";
    detail::write_text((fs::path(base.output_dir) / "orders.csv").string(), orders);
    write_manifest(base, "convergence", {"convergence.csv", "orders.csv", "reference.ckpt", "reference.json"},
                   {{"reference_dt", res.reference_dt}, {"reference_reused", res.reference_reused}});
  }
  return res;
}

struct BlobsColumn {
  std::string name;
  double frobenius_error = 0.0;         // ||W_ref(T) - state(T)||_F
  double max_normalized_h_error = 0.0;  // N / (4 pi) max_t |H(W0) - H(state(t))|
  double max_casimir_drift = 0.0;       // max_t max_k |C_k(t) - C_k(0)|
  double max_eig_drift = 0.0;           // max_t spectrum drift against W0
  double runtime_seconds = 0.0;
  Matrix final_state;
};

struct BlobsResult {
  std::vector<BlobsColumn> columns;  // dense Iso2, Rec(r) with S0, Rec(r) with S(t)
  double reference_dt = 0.0;
  Matrix reference;
};

/// Dense Iso2, RK-MK2 with fixed S0, and the Strang splitting with S(t), all
/// from the same blob initial condition, measured against a dense RK4
/// reference at dt / reference_dt_divisor.
inline BlobsResult run_blobs(const RunConfig& base, std::optional<Matrix> initial = std::nullopt) {
  base.validate();
  const Matrix w0 = initial ? *initial : initial_condition(base.scenario);
  BlobsResult res;
  res.reference_dt = base.dt / static_cast<double>(base.blobs.reference_dt_divisor);
  res.reference = cached_reference(base.output_dir, base.scenario, w0, base.t_final, res.reference_dt);
  const StreamSolver full(base.n);
  const double h0 = hamiltonian(full, w0);
  const Vector spectrum0 = sorted_spectrum(w0);
  const double scale = static_cast<double>(base.n) / kFourPi;

  const std::string rank = std::to_string(base.r);
  const std::vector<std::pair<IntegratorKind, std::string>> plan = {
      {IntegratorKind::iso2, "Zeitlin with Iso2"},
      {IntegratorKind::rkmk2, "Rec(" + rank + ") with S0"},
      {IntegratorKind::strang, "Rec(" + rank + ") with S(t)"}};
  for (const auto& [kind, name] : plan) {
    RunConfig cfg = base;
    cfg.integrator = kind;
    Simulation sim(cfg, w0);
    BlobsColumn col;
    col.name = name;
    RealVector c0;
    auto observe = [&] {
      const DiagnosticsRecord rec = make_record(sim, full, spectrum0, cfg.k_max, 0.0);
      if (c0.size() == 0) c0 = rec.casimirs;
      col.max_normalized_h_error = std::max(col.max_normalized_h_error, scale * std::abs(rec.hamiltonian - h0));
      col.max_casimir_drift = std::max(col.max_casimir_drift, (rec.casimirs - c0).cwiseAbs().maxCoeff());
      col.max_eig_drift = std::max(col.max_eig_drift, rec.eig_drift);
    };
    observe();
    for (long k = 1; k <= cfg.steps(); ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      sim.step();
      col.runtime_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (k % cfg.diag_every == 0 || k == cfg.steps()) observe();
    }
    col.final_state = sim.state();
    col.frobenius_error = sim.factored() ? frobenius_error(res.reference, sim.factors())
                                         : frobenius_error(res.reference, col.final_state);
    res.columns.push_back(std::move(col));
  }
  if (!base.output_dir.empty()) {
    std::string csv = "metric";
    for (const auto& c : res.columns) csv += "," + c.name;
    csv += "\n";
    auto row = [&](const std::string& metric, auto get) {
      csv += metric;
      for (const auto& c : res.columns) csv += "," + format_double(get(c));
      csv += "\n";
    };
    row("frobenius_error_final", [](const BlobsColumn& c) { return c.frobenius_error; });
    row("max_normalized_hamiltonian_error", [](const BlobsColumn& c) { return c.max_normalized_h_error; });
    row("max_casimir_drift", [](const BlobsColumn& c) { return c.max_casimir_drift; });
    row("max_eigenvalue_drift", [](const BlobsColumn& c) { return c.max_eig_drift; });
    row("runtime_s", [](const BlobsColumn& c) { return c.runtime_seconds; });
    detail::write_text((fs::path(base.output_dir) / "blobs_table.csv").string(), csv);
    write_manifest(base, "blobs", {"blobs_table.csv", "reference.ckpt", "reference.json"},
                   {{"reference_dt", res.reference_dt}});
  }
  return res;
}

}  // namespace zeitlin::harness
