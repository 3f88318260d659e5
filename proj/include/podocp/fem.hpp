#pragma once

#include "podocp/common.hpp"
#include "podocp/geometry.hpp"

#include <array>
#include <span>
#include <unordered_map>

/// Taylor-Hood P2/P1 discretization on straight-sided triangles.
///
/// Velocity dofs are interleaved per P2 node (2 node + component). P2 nodes
/// are the mesh vertices followed by one node per edge. Pressure dofs are the
/// vertices. Control dofs are the velocity components of the P2 nodes lying
/// on Gamma_c, ordered by node index.
namespace podocp::fem {

using geometry::Mesh;
using geometry::Point;

struct DofLayout {
  int n_vertices = 0;
  /// Vertex pairs (a < b).
  std::vector<std::array<int, 2>> edges;
  /// Edge k of a triangle is opposite local vertex k.
  std::vector<std::array<int, 3>> triangle_edges;
  std::vector<Point> nodes;
  std::vector<int> control_nodes;
  std::vector<int> control_to_velocity;
  std::vector<int> dirichlet_dofs;
  std::vector<char> dirichlet_mask;
  /// 1 for nodes on Gamma_in that are not on a wall.
  std::vector<char> inlet_node;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_velocity() const { return 2 * n_nodes(); }
  int n_pressure() const { return n_vertices; }
  int n_control() const { return static_cast<int>(control_to_velocity.size()); }
  /// 2 N_v + 2 N_p + N_u: one time instant of (v, p, u, w, q).
  int truth_dimension() const { return 2 * n_velocity() + 2 * n_pressure() + n_control(); }

  static int velocity_dof(int node, int component) { return 2 * node + component; }
  int edge_node(int a, int b) const;
  /// Control dof index of a P2 node/component, or -1.
  int control_dof(int node, int component) const;

  std::unordered_map<long long, int> edge_lookup;
  std::vector<int> node_to_control;
};

DofLayout build_layout(const Mesh& mesh);

enum class FormKind {
  VelocityMass,
  VelocityStiffness,
  VelocityStiffnessXX,
  VelocityStiffnessYY,
  PressureDivergence,
  PressureDivergenceX,
  PressureDivergenceY,
  PressureMass,
  ObservationMass,
  ControlMass,
  ControlTangentialGradient,
  ControlStateCoupling,
};

/// Accepts the snake_case names (e.g. "velocity_mass_domain",
/// "control_tangential_gradient_gc"); throws InvalidArgument otherwise.
FormKind form_kind_from_string(std::string_view name);

/// Sparse matrix of a bilinear form on the mesh as given.
///
/// Shapes: velocity forms N_v x N_v, divergence N_p x N_v with entries
/// -(psi_i, div phi_j), pressure mass N_p x N_p, observation mass N_v x N_v,
/// control mass/gradient N_u x N_u, control coupling N_v x N_u with entries
/// -(phi_i, chi_j) on Gamma_c. A non-empty `regions` restricts the domain
/// forms to triangles carrying those subdomain labels.
SparseMatrix assemble_form(FormKind kind, const Mesh& mesh, const DofLayout& layout,
                           std::span<const int> regions = {});

/// C(v): w -> E(v, ., w) (second slot) and C'(v): w -> E(., v, w) (first slot),
/// with E(a, b, c) = int (a . grad) b . c.
struct ConvectionMatrices {
  SparseMatrix second_slot;
  SparseMatrix first_slot;
};

ConvectionMatrices assemble_convection(const Vector& v, const Mesh& mesh, const DofLayout& layout);

/// Second derivative of v -> E(v, v, w): entries E(phi_i, phi_j, w) + E(phi_j, phi_i, w).
SparseMatrix assemble_convection_hessian(const Vector& w, const Mesh& mesh,
                                         const DofLayout& layout);

/// E(a, b, c) for three velocity coefficient vectors.
double trilinear(const Vector& a, const Vector& b, const Vector& c, const Mesh& mesh,
                 const DofLayout& layout);

/// First inflow component at height x2 for unit amplitude.
double inflow_profile(ProblemId problem, double x2);
/// First target component at height x2 for unit amplitude.
double target_profile(ProblemId problem, double x2);

/// Amplitude of the inflow for mu (1 for stokes_td, mu1 for ns_steady).
double inflow_amplitude(const ParameterPoint& mu);
/// Amplitude of the target for mu (mu3 for stokes_td, mu1 for ns_steady).
double target_amplitude(const ParameterPoint& mu);

/// Nodal lift with unit amplitude: v_in on inlet nodes, zero elsewhere.
/// Nodes shared by inlet and wall carry the no-slip value.
Vector unit_lift(ProblemId problem, const DofLayout& layout);
Vector unit_lift(std::string_view problem, const DofLayout& layout);

struct Lifting {
  Vector field;
  Vector rhs_correction;
};

Vector lift_dirichlet(const ParameterPoint& mu, const DofLayout& layout);
/// Lift plus -op * lift with Dirichlet rows zeroed.
Lifting lift_dirichlet(const ParameterPoint& mu, const DofLayout& layout, const SparseMatrix& op);

/// Nodal interpolant of the target velocity on the whole P2 space.
Vector interpolate_target(const ParameterPoint& mu, const DofLayout& layout);
Vector unit_target(ProblemId problem, const DofLayout& layout);

/// H1 (stiffness + mass) on velocity, L2 on pressure, H1(Gamma_c) on control.
SparseMatrix velocity_inner_product(const Mesh& mesh, const DofLayout& layout);
SparseMatrix pressure_inner_product(const Mesh& mesh, const DofLayout& layout);
SparseMatrix control_inner_product(const Mesh& mesh, const DofLayout& layout);

// ---------------------------------------------------------------------------
// Quadrature (barycentric on triangles, [0, 1] on edges)
// ---------------------------------------------------------------------------

struct TriangleQuadraturePoint {
  double l0, l1, l2, weight;  // weights sum to 1
};
struct EdgeQuadraturePoint {
  double s, weight;  // weights sum to 1
};

/// Degree-5 exact, 7 points.
std::span<const TriangleQuadraturePoint> triangle_rule();
/// Degree-5 exact Gauss-Legendre, 3 points.
std::span<const EdgeQuadraturePoint> edge_rule();

// ---------------------------------------------------------------------------
// Steady Stokes with full Dirichlet data (manufactured-solution studies)
// ---------------------------------------------------------------------------

using VectorFunction = std::function<Eigen::Vector2d(double, double)>;
using ScalarFunction = std::function<double(double, double)>;
/// Row c holds grad of component c.
using GradientFunction = std::function<Eigen::Matrix2d(double, double)>;

struct StokesFields {
  Vector velocity;
  Vector pressure;
};

/// -nu lap v + grad p = f, div v = 0, v = g on the whole boundary,
/// pressure fixed to zero mean.
StokesFields solve_dirichlet_stokes(const Mesh& mesh, const DofLayout& layout, double viscosity,
                                    const VectorFunction& forcing, const VectorFunction& boundary);

double velocity_h1_seminorm_error(const Mesh& mesh, const DofLayout& layout, const Vector& v,
                                  const GradientFunction& exact_gradient);
double velocity_l2_error(const Mesh& mesh, const DofLayout& layout, const Vector& v,
                         const VectorFunction& exact);
double pressure_l2_error(const Mesh& mesh, const DofLayout& layout, const Vector& p,
                         const ScalarFunction& exact);

}  // namespace podocp::fem
