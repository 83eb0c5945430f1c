#pragma once

// Binary containers for matrix checkpoints and rendered field grids:
//   8-byte magic | uint64 LE header length | UTF-8 JSON header | LE float64 payload
// Complex payloads are interleaved (re, im), row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zeitlin/quantization.hpp"
#include "zeitlin/state.hpp"
#include "zeitlin/types.hpp"

namespace zeitlin {

inline constexpr char kCheckpointMagic[9] = "ZLRCKPT1";
inline constexpr char kFieldGridMagic[9] = "ZLRGRID1";

struct CheckpointMeta {
  std::string kind;  // "dense" or "factored"
  int n = 0;
  int r = 0;
  double time = 0.0;
  std::string created_at;
  std::string scenario_hash;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::optional<Matrix> dense;
  std::optional<SpectralFactorization> factors;
};

namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
  return out;
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_le(v);
}

inline void put_f64(std::ostream& os, double x) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &x, sizeof x);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double x = 0.0;
  std::memcpy(&x, &bits, sizeof x);
  return x;
}

inline void put_complex_rows(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put_f64(os, m(i, j).real());
      put_f64(os, m(i, j).imag());
    }
}

inline Matrix get_complex_rows(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double re = get_f64(is);
      const double im = get_f64(is);
      m(i, j) = Complex(re, im);
    }
  if (!is) throw IoError("checkpoint: truncated payload");
  return m;
}

inline void write_container(const std::string& path, const char* magic, const nlohmann::json& header,
                            const std::function<void(std::ostream&)>& payload) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  const std::string text = header.dump();
  os.write(magic, 8);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  payload(os);
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline nlohmann::json read_header(std::istream& is, const char* magic, const std::string& path) {
  char got[8] = {};
  is.read(got, 8);
  if (!is || std::memcmp(got, magic, 8) != 0) throw IoError("'" + path + "' is not a recognized container");
  const std::uint64_t len = get_u64(is);
  if (!is || len > (1u << 24)) throw IoError("'" + path + "': bad header length");
  std::string text(static_cast<std::size_t>(len), '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("'" + path + "': truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': header is not valid JSON: " + e.what());
  }
}

inline nlohmann::json checkpoint_header(const CheckpointMeta& meta) {
  return {{"kind", meta.kind},
          {"N", meta.n},
          {"r", meta.r},
          {"dtype", "complex128"},
          {"layout", "row-major"},
          {"time", meta.time},
          {"created_at", meta.created_at},
          {"scenario_hash", meta.scenario_hash}};
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Matrix& w, CheckpointMeta meta = {}) {
  require_square(w, "write_checkpoint");
  meta.kind = "dense";
  meta.n = meta.r = static_cast<int>(w.rows());
  detail::write_container(path, kCheckpointMagic, detail::checkpoint_header(meta),
                          [&](std::ostream& os) { detail::put_complex_rows(os, w); });
}

/// Factored payload: U (N x r) followed by S (r x r).
inline void write_checkpoint(const std::string& path, const SpectralFactorization& f, CheckpointMeta meta = {}) {
  meta.kind = "factored";
  meta.n = f.n();
  meta.r = f.r();
  detail::write_container(path, kCheckpointMagic, detail::checkpoint_header(meta), [&](std::ostream& os) {
    detail::put_complex_rows(os, f.u);
    detail::put_complex_rows(os, f.s);
  });
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  const nlohmann::json h = detail::read_header(is, kCheckpointMagic, path);
  Checkpoint out;
  try {
    out.meta.kind = h.at("kind").get<std::string>();
    out.meta.n = h.at("N").get<int>();
    out.meta.r = h.at("r").get<int>();
    out.meta.time = h.value("time", 0.0);
    out.meta.created_at = h.value("created_at", "");
    out.meta.scenario_hash = h.value("scenario_hash", "");
    if (h.at("dtype").get<std::string>() != "complex128" || h.at("layout").get<std::string>() != "row-major")
      throw IoError("'" + path + "': unsupported dtype or layout");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': malformed header: " + e.what());
  }
  const int n = out.meta.n, r = out.meta.r;
  if (n < 1 || r < 1 || r > n) throw IoError("'" + path + "': invalid dimensions");
  if (out.meta.kind == "dense") {
    out.dense = detail::get_complex_rows(is, n, n);
  } else if (out.meta.kind == "factored") {
    SpectralFactorization f;
    f.u = detail::get_complex_rows(is, n, r);
    f.s = detail::get_complex_rows(is, r, r);
    out.factors = std::move(f);
  } else {
    throw IoError("'" + path + "': unknown checkpoint kind '" + out.meta.kind + "'");
  }
  return out;
}

/// Field grid: header {n_theta, n_phi, time}, payload values row-major
/// (theta index outer).
inline void write_field_grid(const std::string& path, const FieldGrid& g, double time) {
  const nlohmann::json h = {{"n_theta", g.n_theta}, {"n_phi", g.n_phi}, {"time", time}};
  detail::write_container(path, kFieldGridMagic, h, [&](std::ostream& os) {
    for (Eigen::Index i = 0; i < g.values.rows(); ++i)
      for (Eigen::Index j = 0; j < g.values.cols(); ++j) detail::put_f64(os, g.values(i, j));
  });
}

struct FieldGridFile {
  int n_theta = 0;
  int n_phi = 0;
  double time = 0.0;
  RealMatrix values;
};

inline FieldGridFile read_field_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  const nlohmann::json h = detail::read_header(is, kFieldGridMagic, path);
  FieldGridFile out;
  try {
    out.n_theta = h.at("n_theta").get<int>();
    out.n_phi = h.at("n_phi").get<int>();
    out.time = h.at("time").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': malformed header: " + e.what());
  }
  if (out.n_theta < 1 || out.n_phi < 1) throw IoError("'" + path + "': invalid grid size");
  out.values.resize(out.n_theta, out.n_phi);
  for (int i = 0; i < out.n_theta; ++i)
    for (int j = 0; j < out.n_phi; ++j) out.values(i, j) = detail::get_f64(is);
  if (!is) throw IoError("'" + path + "': truncated payload");
  return out;
}

}  // namespace zeitlin
