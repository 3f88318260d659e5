#include "podocp/fem.hpp"

#include "podocp/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace podocp::fem {

namespace {

long long edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<long long>(a) << 32) | static_cast<unsigned>(b);
}

constexpr double kA1 = 0.470142064105115;
constexpr double kA2 = 0.101286507323456;
constexpr double kW0 = 0.225;
constexpr double kW1 = 0.132394152788506;
constexpr double kW2 = 0.125939180544827;

const std::array<TriangleQuadraturePoint, 7> kTriangleRule{{
    {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, kW0},
    {kA1, kA1, 1.0 - 2.0 * kA1, kW1},
    {kA1, 1.0 - 2.0 * kA1, kA1, kW1},
    {1.0 - 2.0 * kA1, kA1, kA1, kW1},
    {kA2, kA2, 1.0 - 2.0 * kA2, kW2},
    {kA2, 1.0 - 2.0 * kA2, kA2, kW2},
    {1.0 - 2.0 * kA2, kA2, kA2, kW2},
}};

const std::array<EdgeQuadraturePoint, 3> kEdgeRule{{
    {0.5 - 0.5 * 0.7745966692414834, 5.0 / 18.0},
    {0.5, 8.0 / 18.0},
    {0.5 + 0.5 * 0.7745966692414834, 5.0 / 18.0},
}};

/// Geometry and P2/P1 shape data of one triangle.
struct Element {
  std::array<int, 6> nodes{};
  std::array<int, 3> vertices{};
  double area = 0.0;
  std::array<Eigen::Vector2d, 3> grad_lambda;
  std::array<Point, 3> corner;

  Element(const Mesh& mesh, const DofLayout& layout, int t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      vertices[k] = tri[k];
      nodes[k] = tri[k];
      nodes[3 + k] = layout.n_vertices + layout.triangle_edges[t][k];
      corner[k] = mesh.vertices[tri[k]];
    }
    const double x0 = corner[0].x, y0 = corner[0].y, x1 = corner[1].x, y1 = corner[1].y,
                 x2 = corner[2].x, y2 = corner[2].y;
    const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    area = 0.5 * det;
    grad_lambda[0] = Eigen::Vector2d(y1 - y2, x2 - x1) / det;
    grad_lambda[1] = Eigen::Vector2d(y2 - y0, x0 - x2) / det;
    grad_lambda[2] = Eigen::Vector2d(y0 - y1, x1 - x0) / det;
  }

  Point position(const std::array<double, 3>& l) const {
    return {l[0] * corner[0].x + l[1] * corner[1].x + l[2] * corner[2].x,
            l[0] * corner[0].y + l[1] * corner[1].y + l[2] * corner[2].y};
  }

  /// P2 values at barycentric point l.
  static std::array<double, 6> p2(const std::array<double, 3>& l) {
    return {l[0] * (2 * l[0] - 1), l[1] * (2 * l[1] - 1), l[2] * (2 * l[2] - 1),
            4 * l[1] * l[2],       4 * l[2] * l[0],       4 * l[0] * l[1]};
  }

  std::array<Eigen::Vector2d, 6> p2_grad(const std::array<double, 3>& l) const {
    std::array<Eigen::Vector2d, 6> g;
    for (int k = 0; k < 3; ++k) g[k] = (4 * l[k] - 1) * grad_lambda[k];
    for (int k = 0; k < 3; ++k) {
      const int i = (k + 1) % 3, j = (k + 2) % 3;
      g[3 + k] = 4 * (l[i] * grad_lambda[j] + l[j] * grad_lambda[i]);
    }
    return g;
  }
};

/// 1D quadratic shape functions on a facet: end a, end b, midpoint.
std::array<double, 3> p2_edge(double s) {
  return {(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)};
}
std::array<double, 3> p2_edge_ds(double s) { return {4 * s - 3, 4 * s - 1, 4 - 8 * s}; }

bool in_regions(std::span<const int> regions, int label) {
  return regions.empty() || std::find(regions.begin(), regions.end(), label) != regions.end();
}

SparseMatrix from_triplets(int rows, int cols, const std::vector<Triplet>& t) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

/// Field values of a velocity vector at a point of element e.
Eigen::Vector2d velocity_at(const Element& e, const std::array<double, 6>& phi, const Vector& v) {
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (int a = 0; a < 6; ++a) {
    out.x() += phi[a] * v[2 * e.nodes[a]];
    out.y() += phi[a] * v[2 * e.nodes[a] + 1];
  }
  return out;
}

/// Row c = grad of component c.
Eigen::Matrix2d velocity_grad_at(const Element& e, const std::array<Eigen::Vector2d, 6>& g,
                                 const Vector& v) {
  Eigen::Matrix2d out = Eigen::Matrix2d::Zero();
  for (int a = 0; a < 6; ++a) {
    out.row(0) += v[2 * e.nodes[a]] * g[a].transpose();
    out.row(1) += v[2 * e.nodes[a] + 1] * g[a].transpose();
  }
  return out;
}

/// Facets of the requested boundary kind as (a, b, midpoint node).
std::vector<std::array<int, 3>> facet_nodes(const Mesh& mesh, const DofLayout& layout,
                                            bool observation) {
  std::vector<std::array<int, 3>> out;
  if (observation) {
    for (const auto& f : mesh.observation_facets)
      out.push_back({f[0], f[1], layout.edge_node(f[0], f[1])});
  } else {
    for (const auto& f : mesh.boundary_facets)
      if (f.tag == geometry::BoundaryTag::Control)
        out.push_back({f.v[0], f.v[1], layout.edge_node(f.v[0], f.v[1])});
  }
  return out;
}

/// Composite rule: each triangle split into 4 children, 7 points each.
template <class Fn>
void for_each_fine_point(const Element& e, Fn&& fn) {
  static const std::array<std::array<std::array<double, 3>, 3>, 4> children = {{
      {{{1, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}}},
      {{{0.5, 0.5, 0}, {0, 1, 0}, {0, 0.5, 0.5}}},
      {{{0.5, 0, 0.5}, {0, 0.5, 0.5}, {0, 0, 1}}},
      {{{0.5, 0.5, 0}, {0, 0.5, 0.5}, {0.5, 0, 0.5}}},
  }};
  for (const auto& c : children) {
    for (const auto& q : kTriangleRule) {
      std::array<double, 3> l{};
      for (int k = 0; k < 3; ++k) l[k] = q.l0 * c[0][k] + q.l1 * c[1][k] + q.l2 * c[2][k];
      fn(l, 0.25 * q.weight * e.area);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

int DofLayout::edge_node(int a, int b) const {
  const auto it = edge_lookup.find(edge_key(a, b));
  if (it == edge_lookup.end()) throw InvalidArgument("edge is not part of the mesh");
  return n_vertices + it->second;
}

int DofLayout::control_dof(int node, int component) const {
  const int c = node_to_control.at(node);
  return c < 0 ? -1 : 2 * c + component;
}

DofLayout build_layout(const Mesh& mesh) {
  DofLayout layout;
  layout.n_vertices = static_cast<int>(mesh.vertices.size());
  layout.triangle_edges.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
      auto [it, inserted] =
          layout.edge_lookup.try_emplace(edge_key(a, b), static_cast<int>(layout.edges.size()));
      if (inserted) layout.edges.push_back({std::min(a, b), std::max(a, b)});
      layout.triangle_edges[t][k] = it->second;
    }
  }
  layout.nodes = mesh.vertices;
  for (const auto& e : layout.edges) {
    const auto& p = mesh.vertices[e[0]];
    const auto& q = mesh.vertices[e[1]];
    layout.nodes.push_back({0.5 * (p.x + q.x), 0.5 * (p.y + q.y)});
  }

  const int n_nodes = layout.n_nodes();
  std::vector<char> on_inlet(n_nodes, 0), on_wall(n_nodes, 0), on_control(n_nodes, 0);
  for (const auto& f : mesh.boundary_facets) {
    const int mid = layout.edge_node(f.v[0], f.v[1]);
    auto& mark = f.tag == geometry::BoundaryTag::Inlet  ? on_inlet
                 : f.tag == geometry::BoundaryTag::Wall ? on_wall
                                                        : on_control;
    for (int n : {f.v[0], f.v[1], mid}) mark[n] = 1;
  }

  layout.dirichlet_mask.assign(layout.n_velocity(), 0);
  layout.inlet_node.assign(n_nodes, 0);
  layout.node_to_control.assign(n_nodes, -1);
  for (int n = 0; n < n_nodes; ++n) {
    if (on_inlet[n] || on_wall[n]) {
      for (int c = 0; c < 2; ++c) {
        layout.dirichlet_mask[DofLayout::velocity_dof(n, c)] = 1;
        layout.dirichlet_dofs.push_back(DofLayout::velocity_dof(n, c));
      }
    }
    if (on_inlet[n] && !on_wall[n]) layout.inlet_node[n] = 1;
    if (on_control[n]) {
      layout.node_to_control[n] = static_cast<int>(layout.control_nodes.size());
      layout.control_nodes.push_back(n);
      for (int c = 0; c < 2; ++c) layout.control_to_velocity.push_back(DofLayout::velocity_dof(n, c));
    }
  }
  return layout;
}

// ---------------------------------------------------------------------------
// Forms
// ---------------------------------------------------------------------------

FormKind form_kind_from_string(std::string_view name) {
  static const std::pair<std::string_view, FormKind> table[] = {
      {"velocity_mass_domain", FormKind::VelocityMass},
      {"velocity_mass", FormKind::VelocityMass},
      {"velocity_stiffness", FormKind::VelocityStiffness},
      {"velocity_stiffness_xx", FormKind::VelocityStiffnessXX},
      {"velocity_stiffness_yy", FormKind::VelocityStiffnessYY},
      {"pressure_divergence", FormKind::PressureDivergence},
      {"pressure_divergence_x", FormKind::PressureDivergenceX},
      {"pressure_divergence_y", FormKind::PressureDivergenceY},
      {"pressure_mass", FormKind::PressureMass},
      {"obs_boundary_mass", FormKind::ObservationMass},
      {"control_mass_gc", FormKind::ControlMass},
      {"control_tangential_gradient_gc", FormKind::ControlTangentialGradient},
      {"control_state_coupling_gc", FormKind::ControlStateCoupling},
  };
  for (const auto& [key, kind] : table)
    if (key == name) return kind;
  throw InvalidArgument("unknown form kind '" + std::string(name) + "'");
}

SparseMatrix assemble_form(FormKind kind, const Mesh& mesh, const DofLayout& layout,
                           std::span<const int> regions) {
  const int nv = layout.n_velocity(), np = layout.n_pressure(), nu = layout.n_control();
  std::vector<Triplet> trip;

  switch (kind) {
    case FormKind::VelocityMass:
    case FormKind::VelocityStiffness:
    case FormKind::VelocityStiffnessXX:
    case FormKind::VelocityStiffnessYY: {
      trip.reserve(mesh.triangles.size() * 72);
      for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
        if (!in_regions(regions, mesh.subdomain[t])) continue;
        const Element e(mesh, layout, t);
        Eigen::Matrix<double, 6, 6> local = Eigen::Matrix<double, 6, 6>::Zero();
        for (const auto& q : kTriangleRule) {
          const std::array<double, 3> l{q.l0, q.l1, q.l2};
          const double w = q.weight * e.area;
          if (kind == FormKind::VelocityMass) {
            const auto phi = Element::p2(l);
            for (int a = 0; a < 6; ++a)
              for (int b = 0; b < 6; ++b) local(a, b) += w * phi[a] * phi[b];
          } else {
            const auto g = e.p2_grad(l);
            for (int a = 0; a < 6; ++a) {
              for (int b = 0; b < 6; ++b) {
                double v = 0.0;
                if (kind == FormKind::VelocityStiffness) v = g[a].dot(g[b]);
                else if (kind == FormKind::VelocityStiffnessXX) v = g[a].x() * g[b].x();
                else v = g[a].y() * g[b].y();
                local(a, b) += w * v;
              }
            }
          }
        }
        for (int a = 0; a < 6; ++a)
          for (int b = 0; b < 6; ++b)
            for (int c = 0; c < 2; ++c)
              trip.emplace_back(2 * e.nodes[a] + c, 2 * e.nodes[b] + c, local(a, b));
      }
      return from_triplets(nv, nv, trip);
    }

    case FormKind::PressureDivergence:
    case FormKind::PressureDivergenceX:
    case FormKind::PressureDivergenceY: {
      trip.reserve(mesh.triangles.size() * 36);
      const bool use_x = kind != FormKind::PressureDivergenceY;
      const bool use_y = kind != FormKind::PressureDivergenceX;
      for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
        if (!in_regions(regions, mesh.subdomain[t])) continue;
        const Element e(mesh, layout, t);
        Eigen::Matrix<double, 3, 12> local = Eigen::Matrix<double, 3, 12>::Zero();
        for (const auto& q : kTriangleRule) {
          const std::array<double, 3> l{q.l0, q.l1, q.l2};
          const double w = q.weight * e.area;
          const auto g = e.p2_grad(l);
          for (int i = 0; i < 3; ++i) {
            for (int b = 0; b < 6; ++b) {
              if (use_x) local(i, 2 * b) -= w * l[i] * g[b].x();
              if (use_y) local(i, 2 * b + 1) -= w * l[i] * g[b].y();
            }
          }
        }
        for (int i = 0; i < 3; ++i)
          for (int b = 0; b < 6; ++b)
            for (int c = 0; c < 2; ++c)
              if (local(i, 2 * b + c) != 0.0)
                trip.emplace_back(e.vertices[i], 2 * e.nodes[b] + c, local(i, 2 * b + c));
      }
      return from_triplets(np, nv, trip);
    }

    case FormKind::PressureMass: {
      for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
        if (!in_regions(regions, mesh.subdomain[t])) continue;
        const Element e(mesh, layout, t);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            trip.emplace_back(e.vertices[i], e.vertices[j], e.area * (i == j ? 1.0 / 6 : 1.0 / 12));
      }
      return from_triplets(np, np, trip);
    }

    case FormKind::ObservationMass:
    case FormKind::ControlMass:
    case FormKind::ControlTangentialGradient:
    case FormKind::ControlStateCoupling: {
      const bool obs = kind == FormKind::ObservationMass;
      for (const auto& f : facet_nodes(mesh, layout, obs)) {
        const auto& pa = mesh.vertices[f[0]];
        const auto& pb = mesh.vertices[f[1]];
        const double len = std::hypot(pb.x - pa.x, pb.y - pa.y);
        Eigen::Matrix3d local = Eigen::Matrix3d::Zero();
        for (const auto& q : kEdgeRule) {
          if (kind == FormKind::ControlTangentialGradient) {
            const auto d = p2_edge_ds(q.s);
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) local(a, b) += q.weight * d[a] * d[b] / len;
          } else {
            const auto phi = p2_edge(q.s);
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) local(a, b) += q.weight * len * phi[a] * phi[b];
          }
        }
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) {
            for (int c = 0; c < 2; ++c) {
              const int va = DofLayout::velocity_dof(f[a], c);
              if (obs) {
                trip.emplace_back(va, DofLayout::velocity_dof(f[b], c), local(a, b));
              } else if (kind == FormKind::ControlStateCoupling) {
                trip.emplace_back(va, layout.control_dof(f[b], c), -local(a, b));
              } else {
                trip.emplace_back(layout.control_dof(f[a], c), layout.control_dof(f[b], c),
                                  local(a, b));
              }
            }
          }
        }
      }
      if (obs) return from_triplets(nv, nv, trip);
      if (kind == FormKind::ControlStateCoupling) return from_triplets(nv, nu, trip);
      return from_triplets(nu, nu, trip);
    }
  }
  throw InvalidArgument("unhandled form kind");
}

// ---------------------------------------------------------------------------
// Convection
// ---------------------------------------------------------------------------

ConvectionMatrices assemble_convection(const Vector& v, const Mesh& mesh, const DofLayout& layout) {
  const int nv = layout.n_velocity();
  if (v.size() != nv) throw InvalidArgument("convection: velocity vector has wrong length");
  std::vector<Triplet> second, first;
  second.reserve(mesh.triangles.size() * 72);
  first.reserve(mesh.triangles.size() * 144);
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    Eigen::Matrix<double, 6, 6> adv = Eigen::Matrix<double, 6, 6>::Zero();
    // react[c][d](a, b) = int phi_a phi_b d_d v_c
    std::array<std::array<Eigen::Matrix<double, 6, 6>, 2>, 2> react;
    for (auto& r : react)
      for (auto& m : r) m.setZero();
    for (const auto& q : kTriangleRule) {
      const std::array<double, 3> l{q.l0, q.l1, q.l2};
      const double w = q.weight * e.area;
      const auto phi = Element::p2(l);
      const auto g = e.p2_grad(l);
      const Eigen::Vector2d vq = velocity_at(e, phi, v);
      const Eigen::Matrix2d gv = velocity_grad_at(e, g, v);
      for (int a = 0; a < 6; ++a) {
        for (int b = 0; b < 6; ++b) {
          adv(a, b) += w * vq.dot(g[b]) * phi[a];
          const double pp = w * phi[a] * phi[b];
          for (int c = 0; c < 2; ++c)
            for (int d = 0; d < 2; ++d) react[c][d](a, b) += pp * gv(c, d);
        }
      }
    }
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        for (int c = 0; c < 2; ++c) {
          const int row = 2 * e.nodes[a] + c;
          second.emplace_back(row, 2 * e.nodes[b] + c, adv(a, b));
          for (int d = 0; d < 2; ++d) first.emplace_back(row, 2 * e.nodes[b] + d, react[c][d](a, b));
        }
      }
    }
  }
  return {from_triplets(nv, nv, second), from_triplets(nv, nv, first)};
}

SparseMatrix assemble_convection_hessian(const Vector& w, const Mesh& mesh,
                                         const DofLayout& layout) {
  const int nv = layout.n_velocity();
  if (w.size() != nv) throw InvalidArgument("convection hessian: vector has wrong length");
  std::vector<Triplet> trip;
  trip.reserve(mesh.triangles.size() * 144);
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    Eigen::Matrix<double, 12, 12> local = Eigen::Matrix<double, 12, 12>::Zero();
    for (const auto& q : kTriangleRule) {
      const std::array<double, 3> l{q.l0, q.l1, q.l2};
      const double wq = q.weight * e.area;
      const auto phi = Element::p2(l);
      const auto g = e.p2_grad(l);
      const Eigen::Vector2d wv = velocity_at(e, phi, w);
      // H_(a,c),(b,d) = phi_a d_c phi_b w_d + phi_b d_d phi_a w_c
      for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b)
          for (int c = 0; c < 2; ++c)
            for (int d = 0; d < 2; ++d)
              local(2 * a + c, 2 * b + d) +=
                  wq * (phi[a] * g[b][c] * wv[d] + phi[b] * g[a][d] * wv[c]);
    }
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b)
        for (int c = 0; c < 2; ++c)
          for (int d = 0; d < 2; ++d)
            trip.emplace_back(2 * e.nodes[a] + c, 2 * e.nodes[b] + d, local(2 * a + c, 2 * b + d));
  }
  return from_triplets(nv, nv, trip);
}

double trilinear(const Vector& a, const Vector& b, const Vector& c, const Mesh& mesh,
                 const DofLayout& layout) {
  const int nv = layout.n_velocity();
  if (a.size() != nv || b.size() != nv || c.size() != nv)
    throw InvalidArgument("trilinear: vector has wrong length");
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    for (const auto& q : kTriangleRule) {
      const std::array<double, 3> l{q.l0, q.l1, q.l2};
      const auto phi = Element::p2(l);
      const auto g = e.p2_grad(l);
      const Eigen::Vector2d av = velocity_at(e, phi, a);
      const Eigen::Vector2d cv = velocity_at(e, phi, c);
      const Eigen::Matrix2d gb = velocity_grad_at(e, g, b);
      total += q.weight * e.area * cv.dot(gb * av);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Data: inflow, target, lifting
// ---------------------------------------------------------------------------

double inflow_profile(ProblemId problem, double x2) {
  if (problem == ProblemId::StokesTD) return 10.0 * (x2 - 1.0) * (1.0 - x2);
  return 10.0 * x2 * (2.0 - x2);
}

double target_profile(ProblemId problem, double x2) {
  if (problem == ProblemId::StokesTD) {
    const double c = x2 * x2 * x2, s = x2 * x2;
    return 8.0 * (c - s - x2 + 1.0) + 2.0 * (-c - s + x2 + 1.0);
  }
  const double y = x2 - 1.0;
  return 10.0 * (0.8 * (y * y * y - y * y - y + 1.0) + 0.2 * (-y * y * y - y * y + x2));
}

double inflow_amplitude(const ParameterPoint& mu) {
  return mu.problem() == ProblemId::StokesTD ? 1.0 : mu[0];
}

double target_amplitude(const ParameterPoint& mu) {
  return mu.problem() == ProblemId::StokesTD ? mu[2] : mu[0];
}

Vector unit_lift(ProblemId problem, const DofLayout& layout) {
  Vector lift = Vector::Zero(layout.n_velocity());
  for (int n = 0; n < layout.n_nodes(); ++n)
    if (layout.inlet_node[n]) lift[DofLayout::velocity_dof(n, 0)] = inflow_profile(problem, layout.nodes[n].y);
  return lift;
}

Vector unit_lift(std::string_view problem, const DofLayout& layout) {
  return unit_lift(problem_from_string(problem), layout);
}

Vector lift_dirichlet(const ParameterPoint& mu, const DofLayout& layout) {
  return inflow_amplitude(mu) * unit_lift(mu.problem(), layout);
}

Lifting lift_dirichlet(const ParameterPoint& mu, const DofLayout& layout, const SparseMatrix& op) {
  Lifting out;
  out.field = lift_dirichlet(mu, layout);
  if (op.cols() != out.field.size() || op.rows() != out.field.size())
    throw InvalidArgument("lift: operator does not act on the velocity space");
  out.rhs_correction = -(op * out.field);
  for (int d : layout.dirichlet_dofs) out.rhs_correction[d] = 0.0;
  return out;
}

Vector unit_target(ProblemId problem, const DofLayout& layout) {
  Vector vd = Vector::Zero(layout.n_velocity());
  for (int n = 0; n < layout.n_nodes(); ++n)
    vd[DofLayout::velocity_dof(n, 0)] = target_profile(problem, layout.nodes[n].y);
  return vd;
}

Vector interpolate_target(const ParameterPoint& mu, const DofLayout& layout) {
  return target_amplitude(mu) * unit_target(mu.problem(), layout);
}

SparseMatrix velocity_inner_product(const Mesh& mesh, const DofLayout& layout) {
  SparseMatrix x = assemble_form(FormKind::VelocityStiffness, mesh, layout);
  x += assemble_form(FormKind::VelocityMass, mesh, layout);
  return x;
}

SparseMatrix pressure_inner_product(const Mesh& mesh, const DofLayout& layout) {
  return assemble_form(FormKind::PressureMass, mesh, layout);
}

SparseMatrix control_inner_product(const Mesh& mesh, const DofLayout& layout) {
  SparseMatrix x = assemble_form(FormKind::ControlMass, mesh, layout);
  x += assemble_form(FormKind::ControlTangentialGradient, mesh, layout);
  return x;
}

std::span<const TriangleQuadraturePoint> triangle_rule() { return kTriangleRule; }
std::span<const EdgeQuadraturePoint> edge_rule() { return kEdgeRule; }

// ---------------------------------------------------------------------------
// Dirichlet Stokes
// ---------------------------------------------------------------------------

StokesFields solve_dirichlet_stokes(const Mesh& mesh, const DofLayout& layout, double viscosity,
                                    const VectorFunction& forcing, const VectorFunction& boundary) {
  const int nv = layout.n_velocity(), np = layout.n_pressure();
  const int n = nv + np + 1;
  const SparseMatrix k = assemble_form(FormKind::VelocityStiffness, mesh, layout);
  const SparseMatrix d = assemble_form(FormKind::PressureDivergence, mesh, layout);

  Vector load = Vector::Zero(nv);
  Vector pressure_weights = Vector::Zero(np);
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    for_each_fine_point(e, [&](const std::array<double, 3>& l, double w) {
      const auto phi = Element::p2(l);
      const Point x = e.position(l);
      const Eigen::Vector2d f = forcing(x.x, x.y);
      for (int a = 0; a < 6; ++a) {
        load[2 * e.nodes[a]] += w * phi[a] * f.x();
        load[2 * e.nodes[a] + 1] += w * phi[a] * f.y();
      }
      for (int i = 0; i < 3; ++i) pressure_weights[e.vertices[i]] += w * l[i];
    });
  }

  std::vector<char> on_boundary(layout.n_nodes(), 0);
  for (const auto& f : mesh.boundary_facets)
    for (int node : {f.v[0], f.v[1], layout.edge_node(f.v[0], f.v[1])}) on_boundary[node] = 1;
  Vector lift = Vector::Zero(nv);
  std::vector<char> constrained(n, 0);
  for (int node = 0; node < layout.n_nodes(); ++node) {
    if (!on_boundary[node]) continue;
    const Eigen::Vector2d g = boundary(layout.nodes[node].x, layout.nodes[node].y);
    for (int c = 0; c < 2; ++c) {
      lift[2 * node + c] = g[c];
      constrained[2 * node + c] = 1;
    }
  }

  std::vector<Triplet> trip;
  auto scatter = [&](const SparseMatrix& m, int r0, int c0, double s, bool transpose) {
    for (int col = 0; col < m.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
        if (transpose) trip.emplace_back(r0 + it.col(), c0 + it.row(), s * it.value());
        else trip.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
      }
  };
  scatter(k, 0, 0, viscosity, false);
  scatter(d, 0, nv, 1.0, true);
  scatter(d, nv, 0, 1.0, false);
  for (int i = 0; i < np; ++i) {
    trip.emplace_back(nv + i, nv + np, pressure_weights[i]);
    trip.emplace_back(nv + np, nv + i, pressure_weights[i]);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());

  Vector full_lift = Vector::Zero(n);
  full_lift.head(nv) = lift;
  Vector rhs = Vector::Zero(n);
  rhs.head(nv) = load;
  rhs -= a * full_lift;
  for (int i = 0; i < n; ++i)
    if (constrained[i]) rhs[i] = 0.0;
  const SparseMatrix a_bc = linalg::eliminate_symmetric(a, constrained);
  const Vector x = linalg::SparseLu(a_bc).solve(rhs) + full_lift;
  return {x.head(nv), x.segment(nv, np)};
}

double velocity_h1_seminorm_error(const Mesh& mesh, const DofLayout& layout, const Vector& v,
                                  const GradientFunction& exact_gradient) {
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    for_each_fine_point(e, [&](const std::array<double, 3>& l, double w) {
      const Point x = e.position(l);
      const Eigen::Matrix2d diff = velocity_grad_at(e, e.p2_grad(l), v) - exact_gradient(x.x, x.y);
      total += w * diff.squaredNorm();
    });
  }
  return std::sqrt(total);
}

double velocity_l2_error(const Mesh& mesh, const DofLayout& layout, const Vector& v,
                         const VectorFunction& exact) {
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    for_each_fine_point(e, [&](const std::array<double, 3>& l, double w) {
      const Point x = e.position(l);
      total += w * (velocity_at(e, Element::p2(l), v) - exact(x.x, x.y)).squaredNorm();
    });
  }
  return std::sqrt(total);
}

double pressure_l2_error(const Mesh& mesh, const DofLayout& layout, const Vector& p,
                         const ScalarFunction& exact) {
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Element e(mesh, layout, t);
    for_each_fine_point(e, [&](const std::array<double, 3>& l, double w) {
      const Point x = e.position(l);
      double ph = 0.0;
      for (int i = 0; i < 3; ++i) ph += l[i] * p[e.vertices[i]];
      const double diff = ph - exact(x.x, x.y);
      total += w * diff * diff;
    });
  }
  return std::sqrt(total);
}

}  // namespace podocp::fem
