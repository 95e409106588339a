#pragma once

// Artifact serialization: JSON for designs, run metadata, and optimizer
// reports, CSV for sampled curves and trajectories. Every floating-point
// value is written in decimal scientific notation with 17 significant
// digits, so parsing recovers the exact bits and a rerun of the same
// configuration produces byte-identical files. Documents are written through
// a small emitter rather than a JSON library because the library controls
// its own number formatting; parsing goes through nlohmann::json, whose
// strtod-based reader restores the written doubles exactly.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <ouaccel/design.hpp>
#include <ouaccel/evolution.hpp>
#include <ouaccel/kinetic.hpp>
#include <ouaccel/simulate.hpp>

namespace ouaccel {

// Scientific decimal with enough digits to pin the value down to the bit
// (17 for double). Locale-pinned so a host locale cannot change the output.
template <typename Scalar>
std::string format_number(Scalar v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::scientific << std::setprecision(std::numeric_limits<Scalar>::max_digits10 - 1)
     << v;
  return os.str();
}

namespace detail {

template <typename Scalar>
void write_flat_array(std::ostream& os, const MatrixX<Scalar>& m) {
  os << '[';
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      if (i != 0 || j != 0) os << ", ";
      os << format_number(m(i, j));
    }
  os << ']';
}

}  // namespace detail

// {n, family, a, d, j (row-major), rate, residuals}.
template <typename Scalar>
std::string design_to_json(const SamplerDesign<Scalar>& design) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"n\": " << design.n << ",\n";
  os << "  \"family\": \"" << family_name(design.family) << "\",\n";
  os << "  \"a\": ";
  detail::write_flat_array(os, design.a);
  os << ",\n  \"d\": ";
  detail::write_flat_array(os, design.d);
  os << ",\n  \"j\": ";
  detail::write_flat_array(os, design.j);
  os << ",\n  \"rate\": " << format_number(design.rate) << ",\n";
  os << "  \"residuals\": {\"invariance\": " << format_number(design.invariance_residual)
     << ", \"antisymmetry\": " << format_number(design.antisymmetry_residual) << "}\n";
  os << "}\n";
  return os.str();
}

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& doc, const char* key) {
  if (!doc.is_object())
    throw std::invalid_argument("design document: expected a JSON object");
  const auto it = doc.find(key);
  if (it == doc.end())
    throw std::invalid_argument(std::string("design document: missing field '") + key + "'");
  return *it;
}

inline MatrixX<double> read_flat_array(const nlohmann::json& arr, int n, const char* key) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != n * n)
    throw std::invalid_argument(std::string("design document: field '") + key +
                                "' must be a flat row-major array of " + std::to_string(n * n) +
                                " numbers");
  MatrixX<double> m(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = arr[k++].get<double>();
  return m;
}

}  // namespace detail

// Restores the fields verbatim; no physics is revalidated here, so callers
// that accept documents from outside should run check_membership afterwards.
inline SamplerDesign<double> design_from_json(const nlohmann::json& doc) {
  SamplerDesign<double> out;
  out.n = detail::require_key(doc, "n").get<int>();
  if (out.n < 0) throw std::invalid_argument("design document: n must be >= 0");
  out.family = family_from_string(detail::require_key(doc, "family").get<std::string>());
  out.a = detail::read_flat_array(detail::require_key(doc, "a"), out.n, "a");
  out.d = detail::read_flat_array(detail::require_key(doc, "d"), out.n, "d");
  out.j = detail::read_flat_array(detail::require_key(doc, "j"), out.n, "j");
  out.rate = detail::require_key(doc, "rate").get<double>();
  const nlohmann::json& res = detail::require_key(doc, "residuals");
  out.invariance_residual = detail::require_key(res, "invariance").get<double>();
  out.antisymmetry_residual = detail::require_key(res, "antisymmetry").get<double>();
  return out;
}

inline SamplerDesign<double> design_from_json_text(const std::string& text) {
  return design_from_json(nlohmann::json::parse(text));
}

// FNV-1a, 64 bit, as a fixed-width hex string.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Digest of the serialized document; stable because the serialization is.
template <typename Scalar>
std::string design_digest(const SamplerDesign<Scalar>& design) {
  return fnv1a_hex(design_to_json(design));
}

// --- CSV writers; the header row is part of the format ---

template <typename Scalar>
void write_schedule_csv(std::ostream& os, const std::vector<ScheduleRow<Scalar>>& rows) {
  os << "t,kl,bound,tv_bound\n";
  for (const auto& row : rows)
    os << format_number(row.t) << ',' << format_number(row.kl) << ','
       << format_number(row.bound) << ',' << format_number(pinsker_tv_bound(row.kl)) << '\n';
}

template <typename Scalar = double>
struct NormRow {
  Scalar t = 0;
  Scalar norm_sq_closed = 0;  // closed-form ||e^{tA}||^2
  Scalar norm_sq_direct = 0;  // largest squared singular value of e^{tA}
};

template <typename Scalar>
void write_norm_csv(std::ostream& os, const std::vector<NormRow<Scalar>>& rows) {
  os << "t,norm_sq_closed,norm_sq_direct\n";
  for (const auto& row : rows)
    os << format_number(row.t) << ',' << format_number(row.norm_sq_closed) << ','
       << format_number(row.norm_sq_direct) << '\n';
}

template <typename Scalar>
void write_nu_sweep_csv(std::ostream& os, const std::vector<std::pair<Scalar, Scalar>>& sweep) {
  os << "nu,rate\n";
  for (const auto& point : sweep)
    os << format_number(point.first) << ',' << format_number(point.second) << '\n';
}

// One row per family, in rate-chain order (min <= harmonic <= arithmetic <= max).
template <typename Scalar>
void write_rates_csv(std::ostream& os, const RateChain<Scalar>& chain) {
  os << "family,rate\n";
  os << "reversible_identity," << format_number(chain.reversible_identity) << '\n';
  os << "reversible_optimal," << format_number(chain.reversible_optimal) << '\n';
  os << "elliptic_optimal," << format_number(chain.elliptic_optimal) << '\n';
  os << "hypoelliptic_optimal," << format_number(chain.hypoelliptic_optimal) << '\n';
}

// Long format: one row per stored sample per path. The first dim - mom
// coordinates are positions x_1..x_k; the trailing mom coordinates, when the
// state carries velocities, are y_1..y_m.
template <typename Scalar>
void write_trajectory_csv(std::ostream& os, const TrajectoryBatch<Scalar>& batch,
                          int velocity_coords = 0) {
  const int dim = batch.paths.empty() ? 0 : static_cast<int>(batch.paths.front().rows());
  if (velocity_coords < 0 || velocity_coords > dim)
    throw std::invalid_argument("write_trajectory_csv: velocity coordinate count out of range");
  os << "t,path_id";
  for (int i = 0; i < dim - velocity_coords; ++i) os << ",x_" << (i + 1);
  for (int i = 0; i < velocity_coords; ++i) os << ",y_" << (i + 1);
  os << '\n';
  for (std::size_t p = 0; p < batch.paths.size(); ++p)
    for (std::size_t k = 0; k < batch.times.size(); ++k) {
      os << format_number(batch.times[k]) << ',' << p;
      for (int i = 0; i < dim; ++i) os << ',' << format_number(batch.paths[p](i, k));
      os << '\n';
    }
}

// {seed, step, horizon, n_paths, design_digest, rng_algorithm, stability_flag}.
template <typename Scalar>
std::string batch_metadata_json(const TrajectoryBatch<Scalar>& batch,
                                const std::string& digest) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"seed\": " << batch.seed << ",\n";
  os << "  \"step\": " << format_number(batch.step) << ",\n";
  os << "  \"horizon\": " << format_number(batch.horizon) << ",\n";
  os << "  \"n_paths\": " << batch.n_paths << ",\n";
  os << "  \"design_digest\": \"" << digest << "\",\n";
  os << "  \"rng_algorithm\": \"" << batch.rng_algorithm << "\",\n";
  os << "  \"stability_flag\": " << (batch.stability_flag ? "true" : "false") << "\n";
  os << "}\n";
  return os.str();
}

// Optimizer report with the full probe history, so a multimodal profile
// would be visible in the artifact rather than silently bracketed over.
template <typename Scalar>
std::string nu_optimum_json(const NuOptimum<Scalar>& opt) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"nu_star\": " << format_number(opt.nu_star) << ",\n";
  os << "  \"rate_star\": " << format_number(opt.rate_star) << ",\n";
  os << "  \"evaluations\": " << opt.history.size() << ",\n";
  os << "  \"history\": [\n";
  for (std::size_t i = 0; i < opt.history.size(); ++i) {
    const auto& probe = opt.history[i];
    os << "    {\"lo\": " << format_number(probe.lo) << ", \"hi\": " << format_number(probe.hi)
       << ", \"nu\": " << format_number(probe.nu) << ", \"rate\": " << format_number(probe.rate)
       << '}' << (i + 1 < opt.history.size() ? "," : "") << '\n';
  }
  os << "  ]\n";
  os << "}\n";
  return os.str();
}

// --- file helpers; binary streams keep the bytes exactly as composed ---

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

template <typename Scalar>
void save_design(const std::filesystem::path& path, const SamplerDesign<Scalar>& design) {
  write_text_file(path, design_to_json(design));
}

inline SamplerDesign<double> load_design(const std::filesystem::path& path) {
  return design_from_json_text(read_text_file(path));
}

}  // namespace ouaccel
