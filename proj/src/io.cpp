#include "podocp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace podocp::io {

namespace {

constexpr char kMagic[8] = {'P', 'O', 'D', 'O', 'C', 'P', 'B', '1'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

Json sizes_json(const ocp::BlockSizes& s) {
  return Json{{"nv", s.nv}, {"np", s.np}, {"nu", s.nu}, {"nt", s.nt}};
}

ocp::BlockSizes sizes_from_json(const Json& j) {
  ocp::BlockSizes s;
  s.nv = j.at("nv").get<int>();
  s.np = j.at("np").get<int>();
  s.nu = j.at("nu").get<int>();
  s.nt = j.at("nt").get<int>();
  return s;
}

Matrix int_row(const std::vector<int>& v) {
  Matrix m(1, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m(0, i) = v[i];
  return m;
}

std::vector<int> int_vector(const Matrix& m) {
  std::vector<int> out(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) out[i] = static_cast<int>(std::lround(m.data()[i]));
  return out;
}

void add_space(Container& c, const std::string& name, const pod::BasisSpace& s) {
  c.add(name + ".columns", s.columns);
  c.add(name + ".level", int_row(s.level));
  std::vector<int> group(s.group.size());
  for (std::size_t i = 0; i < group.size(); ++i) group[i] = static_cast<int>(s.group[i]);
  c.add(name + ".group", int_row(group));
}

pod::BasisSpace read_space(const Container& c, const std::string& name) {
  pod::BasisSpace s;
  s.columns = c.get(name + ".columns");
  s.level = int_vector(c.get(name + ".level"));
  for (int g : int_vector(c.get(name + ".group"))) s.group.push_back(static_cast<pod::BasisGroup>(g));
  return s;
}

Matrix optional(const Container& c, const std::string& name) { return c.has(name) ? c.get(name) : Matrix(); }

Vector as_vector(const Matrix& m) {
  return m.size() ? Vector(Eigen::Map<const Vector>(m.data(), m.size())) : Vector();
}

}  // namespace

const Matrix& Container::get(std::string_view name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return m;
  throw IoError("container has no array '" + std::string(name) + "'");
}

bool Container::has(std::string_view name) const {
  for (const auto& a : arrays)
    if (a.first == name) return true;
  return false;
}

void write_container(const Container& c, const fs::path& path) {
  Json header = c.header;
  Json list = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : c.arrays) {
    list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  header["arrays"] = list;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : c.arrays) {
    const Matrix& m = a.second;
    if constexpr (std::endian::native == std::endian::little) {
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    } else {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double v = to_little(m.data()[i]);
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

Container read_container(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError(path.string() + " is not a podocp container");
  const std::uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("truncated header in " + path.string());

  Container c;
  try {
    c.header = Json::parse(text);
  } catch (const Json::exception& e) {
    throw IoError("bad container header in " + path.string() + ": " + e.what());
  }
  const Json list = c.header.at("arrays");
  c.header.erase("arrays");
  const auto payload = is.tellg();
  for (const auto& a : list) {
    const auto rows = a.at("rows").get<Eigen::Index>();
    const auto cols = a.at("cols").get<Eigen::Index>();
    const auto offset = a.at("offset").get<std::uint64_t>();
    Matrix m(rows, cols);
    is.seekg(payload + static_cast<std::streamoff>(offset * sizeof(double)));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw IoError("truncated payload in " + path.string());
    if constexpr (std::endian::native == std::endian::big)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = to_little(m.data()[i]);
    c.arrays.emplace_back(a.at("name").get<std::string>(), std::move(m));
  }
  return c;
}

Json to_json(const ProblemSettings& s) {
  Json box = Json::array();
  for (const auto& [lo, hi] : s.box.bounds) box.push_back({lo, hi});
  return Json{{"problem", to_string(s.problem)},
              {"nt", s.nt},
              {"final_time", s.final_time},
              {"initial_state", to_string(s.initial_state)},
              {"alpha1", s.alpha1},
              {"alpha2", s.alpha2},
              {"alpha", s.alpha},
              {"eta", s.eta},
              {"newton_tol", s.newton_tol},
              {"newton_max_iter", s.newton_max_iter},
              {"inflow_scale", s.inflow_scale},
              {"target_scale", s.target_scale},
              {"box", box}};
}

ProblemSettings settings_from_json(const Json& j) {
  ProblemSettings s = ProblemSettings::defaults(problem_from_string(j.at("problem").get<std::string>()));
  s.nt = j.at("nt").get<int>();
  s.final_time = j.at("final_time").get<double>();
  s.initial_state = initial_state_from_string(j.at("initial_state").get<std::string>());
  s.alpha1 = j.at("alpha1").get<double>();
  s.alpha2 = j.at("alpha2").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.eta = j.at("eta").get<double>();
  s.newton_tol = j.at("newton_tol").get<double>();
  s.newton_max_iter = j.at("newton_max_iter").get<int>();
  s.inflow_scale = j.at("inflow_scale").get<double>();
  s.target_scale = j.at("target_scale").get<double>();
  s.box.bounds.clear();
  for (const auto& b : j.at("box")) s.box.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  return s;
}

Json to_json(const ParameterPoint& mu) {
  return Json{{"problem", to_string(mu.problem())}, {"values", mu.values()}};
}

ParameterPoint parameter_from_json(const Json& j) {
  return ParameterPoint(problem_from_string(j.at("problem").get<std::string>()),
                        j.at("values").get<std::vector<double>>());
}

void save_snapshots(const pod::SnapshotSet& s, double mesh_h, const fs::path& path) {
  Container c;
  c.header["kind"] = "snapshots";
  c.header["problem"] = to_string(s.problem);
  c.header["mesh_h"] = mesh_h;
  c.header["sizes"] = sizes_json(s.sizes);
  Json params = Json::array();
  for (const auto& mu : s.parameters) params.push_back(mu.values());
  c.header["parameters"] = params;
  c.header["inner_products"] = {{"v", "h1"}, {"p", "l2"}, {"u", "h1_control"}, {"w", "h1"}, {"q", "l2"}};
  c.header["failures"] = s.failures;
  for (int k = 0; k < ocp::kVarCount; ++k)
    c.add(std::string(ocp::to_string(static_cast<ocp::Var>(k))), s.columns[k]);
  c.add("cost", Vector(Eigen::Map<const Vector>(s.cost.data(), s.cost.size())));
  c.add("truth_seconds", Vector(Eigen::Map<const Vector>(s.truth_seconds.data(), s.truth_seconds.size())));
  write_container(c, path);
}

pod::SnapshotSet load_snapshots(const fs::path& path) {
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "snapshots") throw IoError(path.string() + " does not hold snapshots");
  pod::SnapshotSet s;
  try {
    s.problem = problem_from_string(c.header.at("problem").get<std::string>());
    s.sizes = sizes_from_json(c.header.at("sizes"));
    for (const auto& v : c.header.at("parameters"))
      s.parameters.emplace_back(s.problem, v.get<std::vector<double>>());
    s.failures = c.header.at("failures").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw IoError("bad snapshot header in " + path.string() + ": " + e.what());
  }
  for (int k = 0; k < ocp::kVarCount; ++k) s.columns[k] = c.get(ocp::to_string(static_cast<ocp::Var>(k)));
  const Vector cost = as_vector(c.get("cost"));
  const Vector secs = as_vector(c.get("truth_seconds"));
  s.cost.assign(cost.data(), cost.data() + cost.size());
  s.truth_seconds.assign(secs.data(), secs.data() + secs.size());
  return s;
}

void save_model(const rom::ReducedModel& m, const ProblemSettings& settings, double mesh_h,
                const fs::path& path, const std::array<pod::PodResult, ocp::kVarCount>* spectra) {
  const rom::OnlineModel& on = m.online;
  Container c;
  c.header["kind"] = "reduced_model";
  c.header["problem"] = to_string(m.problem);
  c.header["mesh_h"] = mesh_h;
  c.header["settings"] = to_json(settings);
  c.header["sizes"] = sizes_json(m.sizes);
  c.header["n"] = m.basis.n;
  c.header["supremizers"] = m.basis.supremizers;
  c.header["reduced"] = {{"nv", on.nv}, {"np", on.np}, {"nu", on.nu}};
  c.header["cost"] = {{"s_ll", on.s_ll}, {"s_lt", on.s_lt}, {"s_tt", on.s_tt}};
  if (spectra) {
    Json retained = Json::object();
    for (int k = 0; k < ocp::kVarCount; ++k) {
      const std::string var(ocp::to_string(static_cast<ocp::Var>(k)));
      retained[var] = (*spectra)[k].retained;
      c.add("spectrum." + var, (*spectra)[k].eigenvalues);
    }
    c.header["retained"] = retained;
  }

  add_space(c, "basis.velocity", m.basis.velocity);
  add_space(c, "basis.pressure", m.basis.pressure);
  add_space(c, "basis.control", m.basis.control);
  c.add("unit_lift", m.unit_lift);
  for (int q = 0; q < ocp::kThetaCount; ++q) {
    if (on.operators[q].size()) c.add("operator." + std::to_string(q), on.operators[q]);
    if (on.lift[q].size()) c.add("lift." + std::to_string(q), on.lift[q]);
  }
  c.add("target", on.target);
  if (!m.basis.initial.empty()) {
    c.add("basis.initial.velocity", m.basis.initial.velocity);
    c.add("basis.initial.pressure", m.basis.initial.pressure);
    for (int q = 0; q < ocp::kThetaCount; ++q) {
      const std::string k = std::to_string(q);
      if (on.start_operators[q].size()) c.add("start.operator." + k, on.start_operators[q]);
      if (on.start_lift[q].size()) c.add("start.lift." + k, on.start_lift[q]);
      if (on.start_coupling[q].size()) c.add("start.coupling." + k, on.start_coupling[q]);
      if (on.start_lift_coupling[q].size()) c.add("start.lift_coupling." + k, on.start_lift_coupling[q]);
    }
  }
  c.add("obs_lift", on.obs_lift);
  c.add("obs_target", on.obs_target);
  c.add("obs_mass", on.obs_mass);
  c.add("control_penalty", on.control_penalty);
  if (!on.tensor.empty()) {
    Matrix t(on.nv, on.nv * on.nv);
    for (int i = 0; i < on.nv; ++i) t.middleCols(i * on.nv, on.nv) = on.tensor[i];
    c.add("tensor", t);
    c.add("lift_first", on.lift_first);
    c.add("lift_second", on.lift_second);
    c.add("lift_lift", on.lift_lift);
  }
  write_container(c, path);
}

LoadedModel load_model(const fs::path& path) {
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "reduced_model") throw IoError(path.string() + " does not hold a reduced model");
  LoadedModel out;
  rom::ReducedModel& m = out.model;
  rom::OnlineModel& on = m.online;
  try {
    m.problem = problem_from_string(c.header.at("problem").get<std::string>());
    out.mesh_h = c.header.at("mesh_h").get<double>();
    on.settings = settings_from_json(c.header.at("settings"));
    m.sizes = sizes_from_json(c.header.at("sizes"));
    m.basis.n = c.header.at("n").get<int>();
    m.basis.supremizers = c.header.at("supremizers").get<bool>();
    on.nv = c.header.at("reduced").at("nv").get<int>();
    on.np = c.header.at("reduced").at("np").get<int>();
    on.nu = c.header.at("reduced").at("nu").get<int>();
    on.s_ll = c.header.at("cost").at("s_ll").get<double>();
    on.s_lt = c.header.at("cost").at("s_lt").get<double>();
    on.s_tt = c.header.at("cost").at("s_tt").get<double>();
  } catch (const Json::exception& e) {
    throw IoError("bad model header in " + path.string() + ": " + e.what());
  }
  m.basis.velocity = read_space(c, "basis.velocity");
  m.basis.pressure = read_space(c, "basis.pressure");
  m.basis.control = read_space(c, "basis.control");
  m.unit_lift = as_vector(c.get("unit_lift"));
  for (int q = 0; q < ocp::kThetaCount; ++q) {
    on.operators[q] = optional(c, "operator." + std::to_string(q));
    on.lift[q] = as_vector(optional(c, "lift." + std::to_string(q)));
  }
  if (c.header.contains("retained")) {
    std::array<pod::PodResult, ocp::kVarCount> spectra;
    for (int k = 0; k < ocp::kVarCount; ++k) {
      const std::string var(ocp::to_string(static_cast<ocp::Var>(k)));
      spectra[k].eigenvalues = as_vector(c.get("spectrum." + var));
      spectra[k].retained = c.header["retained"].value(var, 0);
    }
    out.spectra = std::move(spectra);
  }
  on.target = as_vector(c.get("target"));
  if (c.has("basis.initial.velocity")) {
    m.basis.initial.velocity = c.get("basis.initial.velocity");
    m.basis.initial.pressure = c.get("basis.initial.pressure");
    on.start_nv = static_cast<int>(m.basis.initial.velocity.cols());
    on.start_np = static_cast<int>(m.basis.initial.pressure.cols());
    for (int q = 0; q < ocp::kThetaCount; ++q) {
      const std::string k = std::to_string(q);
      on.start_operators[q] = optional(c, "start.operator." + k);
      on.start_lift[q] = as_vector(optional(c, "start.lift." + k));
      on.start_coupling[q] = optional(c, "start.coupling." + k);
      on.start_lift_coupling[q] = as_vector(optional(c, "start.lift_coupling." + k));
    }
  }
  on.obs_lift = as_vector(c.get("obs_lift"));
  on.obs_target = as_vector(c.get("obs_target"));
  on.obs_mass = c.get("obs_mass");
  on.control_penalty = c.get("control_penalty");
  if (c.has("tensor")) {
    const Matrix& t = c.get("tensor");
    for (int i = 0; i < on.nv; ++i) on.tensor.push_back(t.middleCols(i * on.nv, on.nv));
    on.lift_first = c.get("lift_first");
    on.lift_second = c.get("lift_second");
    on.lift_lift = as_vector(c.get("lift_lift"));
  }
  return out;
}

void write_matrix_market(const SparseMatrix& a, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  os << std::setprecision(17);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it)
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

SparseMatrix read_matrix_market(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("%%MatrixMarket matrix coordinate real general", 0) != 0)
    throw IoError(path.string() + ": unsupported Matrix Market header");
  while (std::getline(is, line) && !line.empty() && line[0] == '%') {
  }
  std::istringstream dims(line);
  long rows = 0, cols = 0, nnz = 0;
  if (!(dims >> rows >> cols >> nnz)) throw IoError(path.string() + ": bad size line");
  std::vector<Triplet> trip;
  trip.reserve(nnz);
  for (long k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 0.0;
    if (!(is >> i >> j >> v)) throw IoError(path.string() + ": truncated entries");
    trip.emplace_back(i - 1, j - 1, v);
  }
  SparseMatrix a(rows, cols);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

void write_fields_vtk(const ocp::TruthProblem& truth, const Vector& x, int step, const fs::path& path,
                      double mu2) {
  const auto& sz = truth.sizes();
  if (x.size() != sz.total()) throw InvalidArgument("write_fields_vtk: vector does not match the problem");
  if (step < 0 || step >= sz.nt) throw InvalidArgument("write_fields_vtk: step out of range");
  const geometry::Mesh mesh = geometry::deform(truth.mesh(), geometry::stretch_map(mu2));
  const int nvert = static_cast<int>(mesh.vertices.size());
  const auto blk = [&](ocp::Var var) { return x.segment(sz.index(step, var, 0), sz.size(var)); };
  const Vector v = blk(ocp::Var::V), w = blk(ocp::Var::W), p = blk(ocp::Var::P), q = blk(ocp::Var::Q),
               u = blk(ocp::Var::U);
  const auto& layout = truth.layout();
  Vector control_on_velocity = Vector::Zero(sz.nv);
  for (int k = 0; k < layout.n_control(); ++k) control_on_velocity[layout.control_to_velocity[k]] = u[k];

  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "# vtk DataFile Version 3.0\npodocp fields step " << step << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << std::setprecision(12);
  os << "POINTS " << nvert << " double\n";
  for (const auto& pt : mesh.vertices) os << pt.x << ' ' << pt.y << " 0\n";
  os << "CELLS " << mesh.triangles.size() << ' ' << 4 * mesh.triangles.size() << '\n';
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.triangles.size() << '\n';
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) os << "5\n";
  os << "POINT_DATA " << nvert << '\n';
  const auto vector_field = [&](const char* name, const Vector& f) {
    os << "VECTORS " << name << " double\n";
    for (int i = 0; i < nvert; ++i) os << f[2 * i] << ' ' << f[2 * i + 1] << " 0\n";
  };
  const auto scalar_field = [&](const char* name, auto value) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < nvert; ++i) os << value(i) << '\n';
  };
  vector_field("v", v);
  vector_field("w", w);
  vector_field("u", control_on_velocity);
  scalar_field("p", [&](int i) { return p[i]; });
  scalar_field("q", [&](int i) { return q[i]; });
  scalar_field("speed", [&](int i) { return std::hypot(v[2 * i], v[2 * i + 1]); });
  scalar_field("control_magnitude",
               [&](int i) { return std::hypot(control_on_velocity[2 * i], control_on_velocity[2 * i + 1]); });
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace podocp::io
