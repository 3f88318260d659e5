#pragma once

#include "podocp/ocp.hpp"
#include "podocp/pod.hpp"
#include "podocp/rom.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

/// Persistence.
///
/// Binary container layout:
///   bytes 0..7   magic "PODOCPB1"
///   bytes 8..15  header length H, unsigned 64-bit little endian
///   next H bytes JSON header (UTF-8), which lists every array as
///                {"name", "rows", "cols", "offset"} with offset counted in
///                doubles from the start of the payload
///   payload      IEEE-754 binary64 little endian, column-major arrays
/// The header holds no timestamps, so equal inputs give identical files.
namespace podocp::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Named dense arrays plus a JSON header.
struct Container {
  Json header = Json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;

  void add(std::string name, Matrix m) { arrays.emplace_back(std::move(name), std::move(m)); }
  void add(std::string name, const Vector& v) { arrays.emplace_back(std::move(name), Matrix(v)); }
  const Matrix& get(std::string_view name) const;
  bool has(std::string_view name) const;
};

void write_container(const Container& c, const fs::path& path);
Container read_container(const fs::path& path);

Json to_json(const ProblemSettings& s);
ProblemSettings settings_from_json(const Json& j);
Json to_json(const ParameterPoint& mu);
ParameterPoint parameter_from_json(const Json& j);

/// `mesh_h` is recorded so the truth problem can be rebuilt when needed.
void save_snapshots(const pod::SnapshotSet& s, double mesh_h, const fs::path& path);
pod::SnapshotSet load_snapshots(const fs::path& path);

/// `spectra` (optional) stores the POD eigenvalues and retained counts so the
/// decay report can be produced from the model alone.
void save_model(const rom::ReducedModel& m, const ProblemSettings& settings, double mesh_h,
                const fs::path& path, const std::array<pod::PodResult, ocp::kVarCount>* spectra = nullptr);
struct LoadedModel {
  rom::ReducedModel model;
  double mesh_h = 0.0;
  /// Eigenvalues and retained counts (modes not stored); empty if not saved.
  std::optional<std::array<pod::PodResult, ocp::kVarCount>> spectra;
};
LoadedModel load_model(const fs::path& path);

/// Coordinate real general Matrix Market file.
void write_matrix_market(const SparseMatrix& a, const fs::path& path);
SparseMatrix read_matrix_market(const fs::path& path);

/// Legacy VTK with vertex data of one time step: v, w (vectors), p, q,
/// control u (zero away from Gamma_c) and |v|, |u|. Points are placed on
/// Omega(mu2).
void write_fields_vtk(const ocp::TruthProblem& truth, const Vector& x, int step, const fs::path& path,
                      double mu2 = 1.0);

}  // namespace podocp::io
