#pragma once

// Run configuration: JSON schema (versioned), validation, canonical
// serialization and git-style content hashing.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "zeitlin/integrators.hpp"
#include "zeitlin/scenarios.hpp"
#include "zeitlin/types.hpp"

namespace zeitlin::harness {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class IntegratorKind { iso2, rkmk1, rkmk2, midpoint, strang };

inline std::string to_string(IntegratorKind k) {
  switch (k) {
    case IntegratorKind::iso2: return "iso2";
    case IntegratorKind::rkmk1: return "rkmk1";
    case IntegratorKind::rkmk2: return "rkmk2";
    case IntegratorKind::midpoint: return "midpoint";
    case IntegratorKind::strang: return "strang";
  }
  return "?";
}

inline IntegratorKind integrator_from_string(const std::string& s) {
  for (auto k : {IntegratorKind::iso2, IntegratorKind::rkmk1, IntegratorKind::rkmk2, IntegratorKind::midpoint,
                 IntegratorKind::strang})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown integrator '" + s + "'");
}

inline bool is_low_rank(IntegratorKind k) { return k != IntegratorKind::iso2; }

struct GridConfig {
  int n_theta = 64;
  int n_phi = 128;
};

struct ConvergenceConfig {
  std::vector<double> dts{0.01, 0.005, 0.0025, 0.00125};
  std::vector<IntegratorKind> integrators{IntegratorKind::rkmk1, IntegratorKind::rkmk2, IntegratorKind::iso2,
                                          IntegratorKind::strang};
  std::optional<double> reference_dt;  // default min(dts) / 100
};

struct BenchConfig {
  std::string kind = "stream";
  std::vector<int> sizes{128, 256, 512, 1024};
  int reps = 5;
  int n_trunc = 8;
  int rank = 4;
  double min_batch_seconds = 0.05;
};

struct BlobsConfig {
  int reference_dt_divisor = 100;
};

struct RunConfig {
  ScenarioSpec scenario;
  int n = 16;
  int r = 16;
  std::optional<int> n_trunc;
  double dt = 0.01;
  double t_final = 1.0;
  IntegratorKind integrator = IntegratorKind::iso2;
  std::string tableau = "heun";  // RK-MK tableau used inside the splitting
  FixedPointConfig fixed_point;
  int diag_every = 1;
  int k_max = 5;
  std::string output_dir;
  std::optional<std::string> reference;
  std::vector<double> snapshot_times;
  GridConfig grid;
  ConvergenceConfig convergence;
  BenchConfig bench;
  BlobsConfig blobs;

  [[nodiscard]] long steps() const { return std::lround(t_final / dt); }

  void validate() const {
    scenario.validate();
    if (scenario.n != n) throw ConfigError("config: scenario N differs from N");
    if (!(dt > 0.0)) throw ConfigError("config: dt must be positive");
    if (!(t_final >= dt)) throw ConfigError("config: T must be at least dt");
    if (std::abs(static_cast<double>(steps()) * dt - t_final) > 1e-9 * t_final)
      throw ConfigError("config: T must be an integer multiple of dt");
    if (r < 1 || r > n) throw ConfigError("config: r must satisfy 1 <= r <= N");
    if (n_trunc) TruncationOrder{*n_trunc}.validate(n);
    fixed_point.validate();
    ButcherTableau::by_name(tableau).validate();
    if (diag_every < 1) throw ConfigError("config: diag-every must be positive");
    if (k_max < 1) throw ConfigError("config: k_max must be positive");
    if (grid.n_theta < 2 || grid.n_phi < 2) throw ConfigError("config: grid sizes must be at least 2");
    for (double t : snapshot_times)
      if (t < 0.0 || t > t_final + 1e-12) throw ConfigError("config: snapshot time outside [0, T]");
  }
};

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace detail

inline json scenario_to_json(const ScenarioSpec& s) {
  json j = {{"kind", to_string(s.kind)}, {"N", s.n}, {"seed", s.seed}};
  if (s.kind == ScenarioKind::random_spectrum) {
    j["spectrum_range"] = {s.lo, s.hi};
  } else {
    j["blob_count"] = s.blob_count;
    j["amplitude"] = s.amplitude;
    j["literal_transpose"] = s.literal_transpose;
    j["subtract_trace"] = s.subtract_trace;
  }
  return j;
}

inline ScenarioSpec scenario_from_json(const json& j) {
  ScenarioSpec s;
  s.kind = scenario_kind_from_string(j.at("kind").get<std::string>());
  detail::read_opt(j, "N", s.n);
  detail::read_opt(j, "seed", s.seed);
  if (j.contains("spectrum_range")) {
    const auto range = j.at("spectrum_range").get<std::vector<double>>();
    if (range.size() != 2) throw ConfigError("scenario: spectrum_range must have two entries");
    s.lo = range[0];
    s.hi = range[1];
  }
  detail::read_opt(j, "blob_count", s.blob_count);
  detail::read_opt(j, "amplitude", s.amplitude);
  detail::read_opt(j, "literal_transpose", s.literal_transpose);
  detail::read_opt(j, "subtract_trace", s.subtract_trace);
  return s;
}

inline json to_json(const RunConfig& c) {
  json integrators = json::array();
  for (auto k : c.convergence.integrators) integrators.push_back(to_string(k));
  json j = {{"schema_version", kSchemaVersion},
            {"scenario", scenario_to_json(c.scenario)},
            {"N", c.n},
            {"r", c.r},
            {"n_trunc", c.n_trunc ? json(*c.n_trunc) : json(nullptr)},
            {"dt", c.dt},
            {"T", c.t_final},
            {"integrator", to_string(c.integrator)},
            {"tableau", c.tableau},
            {"fixed_point", {{"tol", c.fixed_point.tol}, {"max_iters", c.fixed_point.max_iters}}},
            {"diag_every", c.diag_every},
            {"k_max", c.k_max},
            {"output_dir", c.output_dir},
            {"reference", c.reference ? json(*c.reference) : json(nullptr)},
            {"snapshot_times", c.snapshot_times},
            {"grid", {{"n_theta", c.grid.n_theta}, {"n_phi", c.grid.n_phi}}},
            {"convergence",
             {{"dts", c.convergence.dts},
              {"integrators", integrators},
              {"reference_dt", c.convergence.reference_dt ? json(*c.convergence.reference_dt) : json(nullptr)}}},
            {"bench",
             {{"kind", c.bench.kind},
              {"sizes", c.bench.sizes},
              {"reps", c.bench.reps},
              {"n_trunc", c.bench.n_trunc},
              {"rank", c.bench.rank},
              {"min_batch_seconds", c.bench.min_batch_seconds}}},
            {"blobs", {{"reference_dt_divisor", c.blobs.reference_dt_divisor}}}};
  return j;
}

/// Parses and validates a configuration. Missing keys keep their defaults;
/// the scenario's N follows the top-level N unless given explicitly.
inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kSchemaVersion)
      throw ConfigError("config: unsupported schema_version");
    if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
    const bool scenario_has_n = j.contains("scenario") && j.at("scenario").contains("N");
    if (j.contains("N")) {
      c.n = j.at("N").get<int>();
      if (!scenario_has_n) c.scenario.n = c.n;
    } else {
      c.n = c.scenario.n;
    }
    c.r = c.n;
    detail::read_opt(j, "r", c.r);
    if (j.contains("n_trunc") && !j.at("n_trunc").is_null()) c.n_trunc = j.at("n_trunc").get<int>();
    detail::read_opt(j, "dt", c.dt);
    detail::read_opt(j, "T", c.t_final);
    if (j.contains("integrator")) c.integrator = integrator_from_string(j.at("integrator").get<std::string>());
    detail::read_opt(j, "tableau", c.tableau);
    if (j.contains("fixed_point")) {
      detail::read_opt(j.at("fixed_point"), "tol", c.fixed_point.tol);
      detail::read_opt(j.at("fixed_point"), "max_iters", c.fixed_point.max_iters);
    }
    detail::read_opt(j, "diag_every", c.diag_every);
    detail::read_opt(j, "k_max", c.k_max);
    detail::read_opt(j, "output_dir", c.output_dir);
    if (j.contains("reference") && !j.at("reference").is_null()) c.reference = j.at("reference").get<std::string>();
    detail::read_opt(j, "snapshot_times", c.snapshot_times);
    if (j.contains("grid")) {
      detail::read_opt(j.at("grid"), "n_theta", c.grid.n_theta);
      detail::read_opt(j.at("grid"), "n_phi", c.grid.n_phi);
    }
    if (j.contains("convergence")) {
      const json& cv = j.at("convergence");
      detail::read_opt(cv, "dts", c.convergence.dts);
      if (cv.contains("integrators")) {
        c.convergence.integrators.clear();
        for (const auto& s : cv.at("integrators")) c.convergence.integrators.push_back(integrator_from_string(s));
      }
      if (cv.contains("reference_dt") && !cv.at("reference_dt").is_null())
        c.convergence.reference_dt = cv.at("reference_dt").get<double>();
    }
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      detail::read_opt(b, "kind", c.bench.kind);
      detail::read_opt(b, "sizes", c.bench.sizes);
      detail::read_opt(b, "reps", c.bench.reps);
      detail::read_opt(b, "n_trunc", c.bench.n_trunc);
      detail::read_opt(b, "rank", c.bench.rank);
      detail::read_opt(b, "min_batch_seconds", c.bench.min_batch_seconds);
    }
    if (j.contains("blobs")) detail::read_opt(j.at("blobs"), "reference_dt_divisor", c.blobs.reference_dt_divisor);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// SHA-1 of "blob <size>\0<content>", as git computes object ids.
inline std::string git_blob_hash(const std::string& content) {
  const std::string obj = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(obj.data(), obj.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("git_blob_hash: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// Canonical serialization: keys sorted (nlohmann::json default), compact.
inline std::string canonical(const json& j) { return j.dump(); }

inline std::string scenario_hash(const ScenarioSpec& s) { return git_blob_hash(canonical(scenario_to_json(s))); }

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace zeitlin::harness
