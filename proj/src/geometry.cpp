#include "podocp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace podocp::geometry {

std::string_view to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Inlet:
      return "inlet";
    case BoundaryTag::Wall:
      return "wall";
    case BoundaryTag::Control:
      return "control";
  }
  return "unknown";
}

namespace {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point lerp(const Point& a, const Point& b, double t) {
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
}

Point add(const Point& a, const Point& b) { return {a.x + b.x, a.y + b.y}; }
Point scale(const Point& a, double s) { return {s * a.x, s * a.y}; }
Point sub(const Point& a, const Point& b) { return {a.x - b.x, a.y - b.y}; }

/// Collects patches into one conforming mesh; coincident vertices merge.
class MeshBuilder {
 public:
  int vertex(const Point& p) {
    const auto key = std::make_pair(std::llround(p.x * 1e9), std::llround(p.y * 1e9));
    auto [it, inserted] = index_.try_emplace(key, static_cast<int>(mesh_.vertices.size()));
    if (inserted) mesh_.vertices.push_back(p);
    return it->second;
  }

  void triangle(int a, int b, int c, int region) {
    const auto& pa = mesh_.vertices[a];
    const auto& pb = mesh_.vertices[b];
    const auto& pc = mesh_.vertices[c];
    const double area2 = (pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y);
    if (area2 < 0) std::swap(b, c);
    mesh_.triangles.push_back({a, b, c});
    mesh_.subdomain.push_back(region);
  }

  void facet(int a, int b, BoundaryTag tag) { mesh_.boundary_facets.push_back({{a, b}, tag}); }
  void observation(int a, int b) { mesh_.observation_facets.push_back({a, b}); }

  Mesh finish() {
    mesh_.h = max_edge_length(mesh_);
    return std::move(mesh_);
  }

 private:
  std::map<std::pair<long long, long long>, int> index_;
  Mesh mesh_;
};

/// Structured ni x nj patch with union-jack diagonals; returns vertex ids
/// indexed [i][j].
template <class MapFn>
std::vector<std::vector<int>> grid_patch(MeshBuilder& b, int ni, int nj, int region, MapFn&& at) {
  std::vector<std::vector<int>> ids(ni + 1, std::vector<int>(nj + 1));
  for (int i = 0; i <= ni; ++i)
    for (int j = 0; j <= nj; ++j) ids[i][j] = b.vertex(at(i, j));
  for (int i = 0; i < ni; ++i) {
    for (int j = 0; j < nj; ++j) {
      const int p00 = ids[i][j], p10 = ids[i + 1][j], p11 = ids[i + 1][j + 1], p01 = ids[i][j + 1];
      if ((i + j) % 2 == 0) {
        b.triangle(p00, p10, p11, region);
        b.triangle(p00, p11, p01, region);
      } else {
        b.triangle(p00, p10, p01, region);
        b.triangle(p10, p11, p01, region);
      }
    }
  }
  return ids;
}

/// Regular subdivision of the triangle (c0, c1, c2) into m^2 similar pieces.
void triangle_patch(MeshBuilder& b, const Point& c0, const Point& c1, const Point& c2, int m,
                    int region) {
  auto at = [&](int i, int k) {
    return add(c0, add(scale(sub(c1, c0), double(i) / m), scale(sub(c2, c0), double(k) / m)));
  };
  for (int i = 0; i < m; ++i) {
    for (int k = 0; i + k < m; ++k) {
      b.triangle(b.vertex(at(i, k)), b.vertex(at(i + 1, k)), b.vertex(at(i, k + 1)), region);
      if (i + k <= m - 2) {
        b.triangle(b.vertex(at(i + 1, k)), b.vertex(at(i + 1, k + 1)), b.vertex(at(i, k + 1)),
                   region);
      }
    }
  }
}

}  // namespace

double Mesh::signed_area(int t) const {
  const auto& tri = triangles[t];
  const auto& a = vertices[tri[0]];
  const auto& b = vertices[tri[1]];
  const auto& c = vertices[tri[2]];
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

double Mesh::area() const {
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) total += signed_area(t);
  return total;
}

double Mesh::min_angle_degrees() const {
  double best = 180.0;
  for (const auto& tri : triangles) {
    for (int k = 0; k < 3; ++k) {
      const auto& p = vertices[tri[k]];
      const auto& q = vertices[tri[(k + 1) % 3]];
      const auto& r = vertices[tri[(k + 2) % 3]];
      const double ux = q.x - p.x, uy = q.y - p.y, vx = r.x - p.x, vy = r.y - p.y;
      const double c = (ux * vx + uy * vy) / (std::hypot(ux, uy) * std::hypot(vx, vy));
      best = std::min(best, std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi);
    }
  }
  return best;
}

double Mesh::tagged_length(BoundaryTag tag) const {
  double total = 0.0;
  for (const auto& f : boundary_facets)
    if (f.tag == tag) total += distance(vertices[f.v[0]], vertices[f.v[1]]);
  return total;
}

double Mesh::observation_length() const {
  double total = 0.0;
  for (const auto& f : observation_facets) total += distance(vertices[f[0]], vertices[f[1]]);
  return total;
}

bool Mesh::has_tag(BoundaryTag tag) const {
  return std::any_of(boundary_facets.begin(), boundary_facets.end(),
                     [tag](const Facet& f) { return f.tag == tag; });
}

double max_edge_length(const Mesh& mesh) {
  double h = 0.0;
  for (const auto& tri : mesh.triangles)
    for (int k = 0; k < 3; ++k)
      h = std::max(h, distance(mesh.vertices[tri[k]], mesh.vertices[tri[(k + 1) % 3]]));
  return h;
}

int resolution_for(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("mesh size h must be positive");
  return static_cast<int>(std::ceil(1.0 / h - 1e-12));
}

Mesh build_bifurcation_mesh(double h) {
  using T = BifurcationTemplate;
  const int m = resolution_for(h);
  if (T::branch_width < 2.0 * h - 1e-12) {
    std::ostringstream os;
    os << "mesh size h = " << h << " leaves fewer than 2 elements across a branch of width "
       << T::branch_width;
    throw MeshResolutionError(os.str());
  }

  const double s2 = 1.0 / std::numbers::sqrt2;
  const Point A{T::channel_length, 0.0};
  const Point M{T::channel_length, 0.5 * T::channel_height};
  const Point D{T::channel_length, T::channel_height};
  const Point X{T::channel_length + std::numbers::sqrt2 - 1.0, 0.5 * T::channel_height};
  const Point up{s2, s2};
  const Point down{s2, -s2};

  MeshBuilder b;
  const int nx = static_cast<int>(std::lround(T::channel_length)) * m;
  const int ny = static_cast<int>(std::lround(T::channel_height)) * m;
  const int nb = static_cast<int>(std::lround(T::branch_length)) * m;

  auto channel = grid_patch(b, nx, ny, Channel, [&](int i, int j) {
    return Point{T::channel_length * i / nx, T::channel_height * j / ny};
  });
  triangle_patch(b, M, D, X, m, Junction);
  triangle_patch(b, M, A, X, m, Junction);
  // i runs across the branch from the crotch side, j along the axis.
  auto upper = grid_patch(b, m, nb, UpperBranch, [&](int i, int j) {
    return add(lerp(X, D, double(i) / m), scale(up, T::branch_length * j / nb));
  });
  auto lower = grid_patch(b, m, nb, LowerBranch, [&](int i, int j) {
    return add(lerp(X, A, double(i) / m), scale(down, T::branch_length * j / nb));
  });

  for (int j = 0; j < ny; ++j) b.facet(channel[0][j], channel[0][j + 1], BoundaryTag::Inlet);
  for (int i = 0; i < nx; ++i) {
    b.facet(channel[i][0], channel[i + 1][0], BoundaryTag::Wall);
    b.facet(channel[i][ny], channel[i + 1][ny], BoundaryTag::Wall);
  }
  const int obs = static_cast<int>(std::lround(T::observation_x / T::channel_length * nx));
  for (int j = 0; j < ny; ++j) b.observation(channel[obs][j], channel[obs][j + 1]);

  for (auto* branch : {&upper, &lower}) {
    auto& ids = *branch;
    for (int j = 0; j < nb; ++j) {
      b.facet(ids[0][j], ids[0][j + 1], BoundaryTag::Wall);
      b.facet(ids[m][j], ids[m][j + 1], BoundaryTag::Wall);
    }
    for (int i = 0; i < m; ++i) b.facet(ids[i][nb], ids[i + 1][nb], BoundaryTag::Control);
  }
  return b.finish();
}

Mesh build_rectangle_mesh(double x0, double x1, double y0, double y1, int nx, int ny) {
  if (nx < 1 || ny < 1 || !(x1 > x0) || !(y1 > y0))
    throw InvalidArgument("rectangle mesh needs positive extents and cell counts");
  MeshBuilder b;
  auto ids = grid_patch(b, nx, ny, Channel, [&](int i, int j) {
    return Point{x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny};
  });
  for (int j = 0; j < ny; ++j) {
    b.facet(ids[0][j], ids[0][j + 1], BoundaryTag::Inlet);
    b.facet(ids[nx][j], ids[nx][j + 1], BoundaryTag::Control);
  }
  for (int i = 0; i < nx; ++i) {
    b.facet(ids[i][0], ids[i + 1][0], BoundaryTag::Wall);
    b.facet(ids[i][ny], ids[i + 1][ny], BoundaryTag::Wall);
  }
  return b.finish();
}

Point GeometricMap::apply(const Point& p, int region) const {
  const auto& piece = pieces.at(region);
  const Eigen::Vector2d q = piece.linear * Eigen::Vector2d(p.x, p.y) + piece.translation;
  return {q.x(), q.y()};
}

double GeometricMap::jacobian_determinant(int region) const {
  return pieces.at(region).linear.determinant();
}

Eigen::Matrix2d GeometricMap::inverse_transpose(int region) const {
  return pieces.at(region).linear.inverse().transpose();
}

GeometricMap stretch_map(double mu2) {
  if (!(mu2 > 0.0)) throw InvalidArgument("stretch parameter must be positive");
  if (mu2 < 1.0 || mu2 > 2.0) {
    std::ostringstream os;
    os << "stretch parameter mu2 = " << mu2 << " outside [1, 2]; extrapolating";
    warn(os.str());
  }
  GeometricMap map;
  map.mu2 = mu2;
  map.pieces[Channel].linear(0, 0) = mu2;
  const Eigen::Vector2d shift((mu2 - 1.0) * BifurcationTemplate::channel_length, 0.0);
  for (int r : {Junction, UpperBranch, LowerBranch}) map.pieces[r].translation = shift;
  return map;
}

std::vector<double> GeometryFactors::as_vector() const {
  return {mass_stretched,         stiffness_xx_stretched, stiffness_yy_stretched,
          divergence_x_stretched, divergence_y_stretched, rest};
}

GeometryFactors affine_geometry_factors(double mu2) {
  // Pull-back of x1 -> mu2 x1: dx = mu2 dx^, d/dx1 = (1/mu2) d/dx^1.
  GeometryFactors f;
  f.mass_stretched = mu2;
  f.stiffness_xx_stretched = 1.0 / mu2;
  f.stiffness_yy_stretched = mu2;
  f.divergence_x_stretched = 1.0;
  f.divergence_y_stretched = mu2;
  f.rest = 1.0;
  return f;
}

Mesh deform(const Mesh& mesh, const GeometricMap& map) {
  Mesh out = mesh;
  std::vector<int> region(mesh.vertices.size(), -1);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    for (int v : mesh.triangles[t])
      if (region[v] < 0) region[v] = mesh.subdomain[t];
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
    out.vertices[v] = map.apply(mesh.vertices[v], std::max(region[v], 0));
  out.h = max_edge_length(out);
  return out;
}

void write_vtk(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "# vtk DataFile Version 3.0\npodocp mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.vertices.size() << " double\n";
  for (const auto& p : mesh.vertices) out << p.x << ' ' << p.y << " 0\n";

  const std::size_t n_tri = mesh.triangles.size();
  const std::size_t n_line = mesh.boundary_facets.size() + mesh.observation_facets.size();
  out << "CELLS " << n_tri + n_line << ' ' << 4 * n_tri + 3 * n_line << '\n';
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& f : mesh.boundary_facets) out << "2 " << f.v[0] << ' ' << f.v[1] << '\n';
  for (const auto& f : mesh.observation_facets) out << "2 " << f[0] << ' ' << f[1] << '\n';
  out << "CELL_TYPES " << n_tri + n_line << '\n';
  for (std::size_t i = 0; i < n_tri; ++i) out << "5\n";
  for (std::size_t i = 0; i < n_line; ++i) out << "3\n";

  out << "CELL_DATA " << n_tri + n_line << '\n';
  out << "SCALARS subdomain int 1\nLOOKUP_TABLE default\n";
  for (int s : mesh.subdomain) out << s << '\n';
  for (std::size_t i = 0; i < n_line; ++i) out << "-1\n";
  // facet_tag: 0 inlet, 1 wall, 2 control, 3 observation line.
  out << "SCALARS facet_tag int 1\nLOOKUP_TABLE default\n";
  for (std::size_t i = 0; i < n_tri; ++i) out << "-1\n";
  for (const auto& f : mesh.boundary_facets) out << static_cast<int>(f.tag) << '\n';
  for (std::size_t i = 0; i < mesh.observation_facets.size(); ++i) out << "3\n";
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const Mesh& mesh, std::ostream& out) {
  out.precision(17);
  out << "podocp-mesh 1\n";
  out << "vertices " << mesh.vertices.size() << '\n';
  for (const auto& p : mesh.vertices) out << p.x << ' ' << p.y << '\n';
  out << "triangles " << mesh.triangles.size() << '\n';
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    out << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << mesh.subdomain[t] << '\n';
  }
  out << "facets " << mesh.boundary_facets.size() << '\n';
  for (const auto& f : mesh.boundary_facets)
    out << f.v[0] << ' ' << f.v[1] << ' ' << to_string(f.tag) << '\n';
  out << "observation " << mesh.observation_facets.size() << '\n';
  for (const auto& f : mesh.observation_facets) out << f[0] << ' ' << f[1] << '\n';
}

Mesh read_text(std::istream& in) {
  auto expect = [&](std::string_view word) {
    std::string w;
    if (!(in >> w) || w != word) throw IoError("mesh dump: expected '" + std::string(word) + "'");
  };
  Mesh mesh;
  int version = 0;
  expect("podocp-mesh");
  in >> version;
  if (version != 1) throw IoError("mesh dump: unsupported version");
  std::size_t n = 0;
  expect("vertices");
  in >> n;
  mesh.vertices.resize(n);
  for (auto& p : mesh.vertices) in >> p.x >> p.y;
  expect("triangles");
  in >> n;
  mesh.triangles.resize(n);
  mesh.subdomain.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    in >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2] >> mesh.subdomain[t];
  expect("facets");
  in >> n;
  mesh.boundary_facets.resize(n);
  for (auto& f : mesh.boundary_facets) {
    std::string tag;
    in >> f.v[0] >> f.v[1] >> tag;
    if (tag == "inlet") f.tag = BoundaryTag::Inlet;
    else if (tag == "wall") f.tag = BoundaryTag::Wall;
    else if (tag == "control") f.tag = BoundaryTag::Control;
    else throw IoError("mesh dump: unknown facet tag '" + tag + "'");
  }
  expect("observation");
  in >> n;
  mesh.observation_facets.resize(n);
  for (auto& f : mesh.observation_facets) in >> f[0] >> f[1];
  if (!in) throw IoError("mesh dump: truncated input");
  mesh.h = max_edge_length(mesh);
  return mesh;
}

}  // namespace podocp::geometry
