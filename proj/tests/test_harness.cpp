#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "zeitlin/harness/bench.hpp"
#include "zeitlin/harness/config.hpp"
#include "zeitlin/harness/fit.hpp"
#include "zeitlin/harness/run.hpp"
#include "zeitlin/io.hpp"

using namespace zeitlin;
using namespace zeitlin::harness;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("zeitlin_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  [[nodiscard]] std::string str(const std::string& leaf = "") const { return (path_ / leaf).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig small_config(int n = 6) {
  RunConfig c;
  c.n = n;
  c.r = n;
  c.scenario.n = n;
  c.scenario.lo = 0.1;
  c.scenario.hi = 1.0;
  c.dt = 0.01;
  c.t_final = 0.01;
  c.k_max = 3;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ZEITLIN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Matrix random_state(int n, std::uint64_t seed) {
  ScenarioSpec s;
  s.n = n;
  s.seed = seed;
  return random_spectrum_ic(s);
}

}  // namespace

TEST(Checkpoint, DenseRoundTripIsBitExact) {
  TempDir dir;
  const Matrix w = random_state(7, 1);
  CheckpointMeta meta;
  meta.time = 1.25;
  meta.scenario_hash = "abc";
  write_checkpoint(dir.str("w.ckpt"), w, meta);
  const Checkpoint c = read_checkpoint(dir.str("w.ckpt"));
  ASSERT_TRUE(c.dense.has_value());
  EXPECT_FALSE(c.factors.has_value());
  EXPECT_TRUE((c.dense->array() == w.array()).all());
  EXPECT_EQ(c.meta.kind, "dense");
  EXPECT_EQ(c.meta.n, 7);
  EXPECT_EQ(c.meta.time, 1.25);
  EXPECT_EQ(c.meta.scenario_hash, "abc");
}

TEST(Checkpoint, FactoredRoundTripIsBitExact) {
  TempDir dir;
  const SpectralFactorization f = truncated_eig(random_state(9, 2), 3).factors;
  write_checkpoint(dir.str("f.ckpt"), f);
  const Checkpoint c = read_checkpoint(dir.str("f.ckpt"));
  ASSERT_TRUE(c.factors.has_value());
  EXPECT_EQ(c.meta.kind, "factored");
  EXPECT_EQ(c.meta.r, 3);
  EXPECT_TRUE((c.factors->u.array() == f.u.array()).all());
  EXPECT_TRUE((c.factors->s.array() == f.s.array()).all());
}

TEST(Checkpoint, CorruptFilesRaiseIoError) {
  TempDir dir;
  EXPECT_THROW(read_checkpoint(dir.str("missing.ckpt")), IoError);
  {
    std::ofstream os(dir.str("bad.ckpt"), std::ios::binary);
    os << "NOTMAGIC and some bytes";
  }
  EXPECT_THROW(read_checkpoint(dir.str("bad.ckpt")), IoError);
  write_checkpoint(dir.str("ok.ckpt"), random_state(5, 3));
  const std::string bytes = slurp(dir.str("ok.ckpt"));
  {
    std::ofstream os(dir.str("short.ckpt"), std::ios::binary);
    os << bytes.substr(0, bytes.size() - 9);
  }
  EXPECT_THROW(read_checkpoint(dir.str("short.ckpt")), IoError);
  EXPECT_THROW(write_checkpoint(dir.str("no/such/dir/x.ckpt"), random_state(5, 3)), IoError);
}

TEST(FieldGridFile, RoundTrip) {
  TempDir dir;
  const FieldGrid g = render_field(random_state(6, 4), 9, 16);
  write_field_grid(dir.str("g.grid"), g, 0.5);
  const FieldGridFile f = read_field_grid(dir.str("g.grid"));
  EXPECT_EQ(f.n_theta, 9);
  EXPECT_EQ(f.n_phi, 16);
  EXPECT_EQ(f.time, 0.5);
  EXPECT_TRUE((f.values.array() == g.values.array()).all());
  EXPECT_THROW(read_field_grid(dir.str("nothing.grid")), IoError);
}

TEST(Config, DefaultsAndOverrides) {
  const RunConfig c = config_from_json(json::parse(R"({"N": 8, "dt": 0.02, "T": 0.1, "integrator": "strang", "r": 3})"));
  EXPECT_EQ(c.n, 8);
  EXPECT_EQ(c.scenario.n, 8);
  EXPECT_EQ(c.r, 3);
  EXPECT_EQ(c.steps(), 5);
  EXPECT_EQ(c.integrator, IntegratorKind::strang);
  EXPECT_EQ(c.fixed_point.tol, 1e-12);
  EXPECT_EQ(c.fixed_point.max_iters, 100);
  EXPECT_FALSE(c.n_trunc.has_value());
  // r defaults to N
  EXPECT_EQ(config_from_json(json::parse(R"({"N": 5})")).r, 5);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = small_config(8);
  c.r = 4;
  c.n_trunc = 3;
  c.integrator = IntegratorKind::midpoint;
  c.scenario.kind = ScenarioKind::vortex_blobs;
  c.scenario.blob_count = 2;
  c.snapshot_times = {0.0, 0.01};
  c.convergence.reference_dt = 1e-4;
  const RunConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(input_hash(back), input_hash(c));
}

TEST(Config, InvalidInputsAreConfigErrors) {
  auto bad = [](const char* text) { return config_from_json(json::parse(text)); };
  EXPECT_THROW(bad(R"({"N": 8, "dt": -0.1})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "r": 9})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "r": 0})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "dt": 0.03, "T": 0.1})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "integrator": "rk4"})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "n_trunc": 8})"), std::invalid_argument);
  EXPECT_THROW(bad(R"({"N": "eight"})"), ConfigError);
  EXPECT_THROW(bad(R"({"schema_version": 2})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "scenario": {"kind": "random-spectrum", "N": 6}})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "scenario": {"kind": "random-spectrum", "spectrum_range": [2, 1]}})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "fixed_point": {"max_iters": 0}})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "T": 1, "snapshot_times": [2]})"), ConfigError);
  EXPECT_THROW(bad(R"({"N": 8, "tableau": "rk4"})"), ConfigError);
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  {
    std::ofstream os(dir.str("c.json"));
    os << R"({"N": 4, "T": 0.02})";
  }
  EXPECT_EQ(load_config(dir.str("c.json")).n, 4);
  {
    std::ofstream os(dir.str("broken.json"));
    os << "{ not json";
  }
  EXPECT_THROW(load_config(dir.str("broken.json")), ConfigError);
  EXPECT_THROW(load_config(dir.str("absent.json")), IoError);
}

TEST(Hashing, MatchesGitObjectIds) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Hashing, InputHashIgnoresOutputDirectory) {
  RunConfig a = small_config(), b = small_config();
  a.output_dir = "/tmp/a";
  b.output_dir = "/tmp/b";
  EXPECT_EQ(input_hash(a), input_hash(b));
  b.dt = 0.005;
  b.t_final = 0.01;
  EXPECT_NE(input_hash(a), input_hash(b));
}

TEST(Fit, RecoversPowerLaw) {
  const std::vector<double> x{1, 2, 4, 8, 16};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 2.5));
  const LogLogFit f = fit_loglog(x, y);
  EXPECT_NEAR(f.slope, 2.5, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_THROW(fit_loglog({1.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(fit_loglog({1.0, 2.0}, {1.0, -1.0}), std::invalid_argument);
}

TEST(Simulate, OneStepWritesTwoRowsAndArtifacts) {
  TempDir dir;
  RunConfig c = small_config();
  c.output_dir = dir.str("run");
  c.snapshot_times = {0.0, 0.01};
  c.grid = {5, 8};
  const SimulationOutcome out = run_simulate(c);
  ASSERT_EQ(out.records.size(), 2u);
  const std::string csv = slurp(dir.str("run/diagnostics.csv"));
  std::istringstream lines(csv);
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header, csv_header(3));
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 2);
  EXPECT_TRUE(fs::exists(dir.str("run/final.ckpt")));
  EXPECT_TRUE(fs::exists(dir.str("run/field_t0.000000.grid")));
  EXPECT_TRUE(fs::exists(dir.str("run/field_t0.010000.grid")));
  const json manifest = json::parse(slurp(dir.str("run/manifest.json")));
  EXPECT_EQ(manifest.at("input_hash"), input_hash(c));
  EXPECT_EQ(manifest.at("command"), "simulate");
  const Checkpoint ck = read_checkpoint(dir.str("run/final.ckpt"));
  EXPECT_TRUE((ck.dense->array() == out.final_state.array()).all());
}

TEST(Simulate, DiagnosticsAreDeterministic) {
  RunConfig c = small_config();
  c.t_final = 0.05;
  c.integrator = IntegratorKind::strang;
  c.r = 3;
  const auto a = run_simulate(c), b = run_simulate(c);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    DiagnosticsRecord ra = a.records[i], rb = b.records[i];
    ra.wall_ms = rb.wall_ms = 0.0;
    EXPECT_EQ(csv_row(ra), csv_row(rb));
  }
}

TEST(Simulate, DiagEveryThinsRecordsButKeepsFinal) {
  RunConfig c = small_config();
  c.t_final = 0.07;
  c.diag_every = 3;
  EXPECT_EQ(run_simulate(c).records.size(), 4u);  // t = 0, 3, 6, 7 steps
}

TEST(Simulate, ReferenceColumnFilledAtReferenceTime) {
  TempDir dir;
  RunConfig c = small_config();
  c.t_final = 0.02;
  const Matrix w0 = initial_condition(c.scenario);
  CheckpointMeta meta;
  meta.time = 0.02;
  write_checkpoint(dir.str("ref.ckpt"), rk4_reference(w0, 0.02, 1e-4), meta);
  c.reference = dir.str("ref.ckpt");
  const auto out = run_simulate(c);
  EXPECT_FALSE(out.records.front().frobenius_error_vs_reference.has_value());
  ASSERT_TRUE(out.records.back().frobenius_error_vs_reference.has_value());
  EXPECT_LT(*out.records.back().frobenius_error_vs_reference, 1e-5);
}

TEST(Reference, CachedWhenInputsMatch) {
  TempDir dir;
  ScenarioSpec s;
  s.n = 5;
  const Matrix w0 = initial_condition(s);
  bool reused = true;
  const Matrix a = cached_reference(dir.str(), s, w0, 0.01, 1e-3, &reused);
  EXPECT_FALSE(reused);
  const Matrix b = cached_reference(dir.str(), s, w0, 0.01, 1e-3, &reused);
  EXPECT_TRUE(reused);
  EXPECT_TRUE((a.array() == b.array()).all());
  cached_reference(dir.str(), s, w0, 0.01, 5e-4, &reused);
  EXPECT_FALSE(reused);
}

TEST(Convergence, FittedOrdersOnSmallProblem) {
  RunConfig c = small_config();
  c.t_final = 0.2;
  c.dt = 0.02;
  c.convergence.dts = {0.02, 0.01, 0.005};
  c.convergence.integrators = {IntegratorKind::iso2, IntegratorKind::rkmk1};
  c.convergence.reference_dt = 1e-4;
  const ConvergenceResult res = run_convergence(c);
  EXPECT_EQ(res.rows.size(), 6u);
  EXPECT_NEAR(res.order(IntegratorKind::iso2).fit.slope, 2.0, 0.15);
  EXPECT_NEAR(res.order(IntegratorKind::rkmk1).fit.slope, 1.0, 0.15);
  EXPECT_THROW(static_cast<void>(res.order(IntegratorKind::strang)), std::out_of_range);
}

TEST(Blobs, ThreeColumnsWithConservedCasimirs) {
  RunConfig c = small_config(8);
  c.scenario.kind = ScenarioKind::vortex_blobs;
  c.scenario.amplitude = 1.0;
  c.r = 4;
  c.t_final = 0.05;
  c.blobs.reference_dt_divisor = 10;
  const BlobsResult res = run_blobs(c);
  ASSERT_EQ(res.columns.size(), 3u);
  EXPECT_EQ(res.columns[1].name, "Rec(4) with S0");
  for (const auto& col : res.columns) {
    EXPECT_LT(col.max_casimir_drift, 1e-10) << col.name;
    EXPECT_LT(col.frobenius_error, 1e-3) << col.name;
  }
}

TEST(Bench, ReportsOneTimingPerSize) {
  BenchConfig b;
  b.kind = "stream-truncated";
  b.sizes = {16, 32, 64};
  b.reps = 1;
  b.min_batch_seconds = 0.001;
  const BenchReport rep = run_bench(b);
  EXPECT_EQ(rep.seconds.size(), 3u);
  for (double s : rep.seconds) EXPECT_GT(s, 0.0);
  b.kind = "unknown";
  EXPECT_THROW(run_bench(b), ConfigError);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("simulate --config " + dir.str("absent.json")), 2);
  EXPECT_EQ(run_cli("basis-check --sizes 2,4"), 0);
  {
    std::ofstream os(dir.str("ok.json"));
    os << R"({"N": 4, "dt": 0.01, "T": 0.02, "k_max": 2})";
  }
  EXPECT_EQ(run_cli("simulate --config " + dir.str("ok.json") + " --output " + dir.str("out")), 0);
  EXPECT_TRUE(fs::exists(dir.str("out/diagnostics.csv")));
  {
    std::ofstream os(dir.str("bad.json"));
    os << R"({"N": 4, "r": 7})";
  }
  EXPECT_EQ(run_cli("simulate --config " + dir.str("bad.json")), 2);
  {
    std::ofstream os(dir.str("diverge.json"));
    os << R"({"N": 8, "dt": 5.0, "T": 5.0, "fixed_point": {"tol": 1e-14, "max_iters": 1}})";
  }
  EXPECT_EQ(run_cli("simulate --config " + dir.str("diverge.json")), 3);
  {
    std::ofstream os(dir.str("blocker"));
    os << "file";
  }
  EXPECT_EQ(run_cli("simulate --config " + dir.str("ok.json") + " --output " + dir.str("blocker/sub")), 4);
}
