#include "podocp/fem.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace podocp;
using namespace podocp::fem;
using geometry::build_rectangle_mesh;

namespace {

geometry::Mesh single_triangle() {
  geometry::Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {0, 1}};
  m.triangles = {{0, 1, 2}};
  m.subdomain = {0};
  m.boundary_facets = {{{0, 1}, geometry::BoundaryTag::Wall},
                       {{1, 2}, geometry::BoundaryTag::Control},
                       {{2, 0}, geometry::BoundaryTag::Inlet}};
  m.h = std::sqrt(2.0);
  return m;
}

/// Nodal interpolant of a vector field in the P2 space.
Vector interpolate(const DofLayout& layout, const VectorFunction& f) {
  Vector v(layout.n_velocity());
  for (int n = 0; n < layout.n_nodes(); ++n) {
    const auto val = f(layout.nodes[n].x, layout.nodes[n].y);
    v[DofLayout::velocity_dof(n, 0)] = val.x();
    v[DofLayout::velocity_dof(n, 1)] = val.y();
  }
  return v;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

double asymmetry(const SparseMatrix& a) { return (SparseMatrix(a.transpose()) - a).norm(); }

}  // namespace

TEST_CASE("triangle rule is exact for degree 5") {
  for (int a = 0; a <= 5; ++a)
    for (int b = 0; a + b <= 5; ++b)
      for (int c = 0; a + b + c <= 5; ++c) {
        double sum = 0.0;
        for (const auto& q : triangle_rule()) sum += q.weight * std::pow(q.l0, a) * std::pow(q.l1, b) * std::pow(q.l2, c);
        // Average over the triangle: 2 a! b! c! / (a + b + c + 2)!
        const double exact = 2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2);
        CHECK(sum == doctest::Approx(exact).epsilon(1e-13));
      }
}

TEST_CASE("edge rule is exact for degree 5") {
  for (int k = 0; k <= 5; ++k) {
    double sum = 0.0;
    for (const auto& q : edge_rule()) sum += q.weight * std::pow(q.s, k);
    CHECK(sum == doctest::Approx(1.0 / (k + 1)).epsilon(1e-13));
  }
}

TEST_CASE("single triangle has 12 velocity and 3 pressure dofs") {
  const auto m = single_triangle();
  const auto l = build_layout(m);
  CHECK(l.n_velocity() == 12);
  CHECK(l.n_pressure() == 3);
  CHECK(l.edges.size() == 3);
  // Control edge (1, 2): two vertices and the midpoint, two components each.
  CHECK(l.n_control() == 6);
}

TEST_CASE("pressure dofs equal vertex count on refined meshes") {
  for (int n : {2, 4, 8}) {
    const auto m = build_rectangle_mesh(0, 1, 0, 1, n, n);
    const auto l = build_layout(m);
    CHECK(l.n_pressure() == static_cast<int>(m.vertices.size()));
    CHECK(l.n_nodes() == static_cast<int>(m.vertices.size() + l.edges.size()));
  }
}

TEST_CASE("mass of a constant field is the area") {
  const auto m = geometry::build_bifurcation_mesh(0.5);
  const auto l = build_layout(m);
  const SparseMatrix mass = assemble_form(FormKind::VelocityMass, m, l);
  const Vector e1 = interpolate(l, [](double, double) { return Eigen::Vector2d(1.0, 0.0); });
  CHECK(e1.dot(mass * e1) == doctest::Approx(m.area()).epsilon(1e-12));
  const SparseMatrix pm = assemble_form(FormKind::PressureMass, m, l);
  const Vector one = Vector::Ones(l.n_pressure());
  CHECK(one.dot(pm * one) == doctest::Approx(m.area()).epsilon(1e-12));
}

TEST_CASE("divergence annihilates a divergence-free quadratic field") {
  const auto m = build_rectangle_mesh(0, 1, 0, 1, 3, 3);
  const auto l = build_layout(m);
  const SparseMatrix d = assemble_form(FormKind::PressureDivergence, m, l);
  const Vector v = interpolate(l, [](double x, double y) { return Eigen::Vector2d(x * x, -2.0 * x * y); });
  CHECK(d.rows() == l.n_pressure());
  CHECK(d.cols() == l.n_velocity());
  CHECK((d * v).norm() <= 1e-13);
  // A field with div = 1 gives -(psi, 1).
  const Vector w = interpolate(l, [](double x, double) { return Eigen::Vector2d(x, 0.0); });
  CHECK((d * w).sum() == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("stiffness of a linear field matches its gradient energy") {
  const auto m = build_rectangle_mesh(0, 2, 0, 1, 4, 2);
  const auto l = build_layout(m);
  const Vector v = interpolate(l, [](double x, double y) { return Eigen::Vector2d(3.0 * x + y, -y); });
  const SparseMatrix k = assemble_form(FormKind::VelocityStiffness, m, l);
  const SparseMatrix kxx = assemble_form(FormKind::VelocityStiffnessXX, m, l);
  const SparseMatrix kyy = assemble_form(FormKind::VelocityStiffnessYY, m, l);
  // |grad v|^2 = 9 + 1 + 1 on area 2.
  CHECK(v.dot(k * v) == doctest::Approx(22.0).epsilon(1e-12));
  CHECK(v.dot(kxx * v) == doctest::Approx(18.0).epsilon(1e-12));
  CHECK(v.dot(kyy * v) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK((k - kxx - kyy).norm() <= 1e-12 * k.norm());
}

TEST_CASE("control forms on a constant trace") {
  const auto m = build_rectangle_mesh(0, 2, 0, 1, 4, 4);
  const auto l = build_layout(m);
  Vector c = Vector::Zero(l.n_control());
  for (int n : l.control_nodes) c[l.control_dof(n, 0)] = 1.0;
  const SparseMatrix mass = assemble_form(FormKind::ControlMass, m, l);
  const SparseMatrix grad = assemble_form(FormKind::ControlTangentialGradient, m, l);
  CHECK(c.dot(mass * c) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((grad * c).norm() <= 1e-12);
  // Tangential derivative 1 along the unit side.
  Vector lin = Vector::Zero(l.n_control());
  for (int n : l.control_nodes) lin[l.control_dof(n, 1)] = l.nodes[n].y;
  CHECK(lin.dot(grad * lin) == doctest::Approx(1.0).epsilon(1e-12));
  const SparseMatrix b = assemble_form(FormKind::ControlStateCoupling, m, l);
  CHECK(b.rows() == l.n_velocity());
  CHECK(b.cols() == l.n_control());
  const Vector e1 = interpolate(l, [](double, double) { return Eigen::Vector2d(1.0, 0.0); });
  CHECK(e1.dot(b * c) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("observation mass integrates along x1 = 2") {
  const auto m = geometry::build_bifurcation_mesh(0.25);
  const auto l = build_layout(m);
  const SparseMatrix obs = assemble_form(FormKind::ObservationMass, m, l);
  const Vector e2 = interpolate(l, [](double, double) { return Eigen::Vector2d(0.0, 1.0); });
  CHECK(e2.dot(obs * e2) == doctest::Approx(2.0).epsilon(1e-12));
  const Vector q = interpolate(l, [](double, double y) { return Eigen::Vector2d(y, 0.0); });
  CHECK(q.dot(obs * q) == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("symmetric forms are symmetric") {
  const auto m = geometry::build_bifurcation_mesh(0.5);
  const auto l = build_layout(m);
  for (auto k : {FormKind::VelocityMass, FormKind::VelocityStiffness, FormKind::VelocityStiffnessXX,
                 FormKind::VelocityStiffnessYY, FormKind::PressureMass, FormKind::ObservationMass,
                 FormKind::ControlMass, FormKind::ControlTangentialGradient}) {
    const SparseMatrix a = assemble_form(k, m, l);
    CHECK(asymmetry(a) <= 1e-14 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("form names parse and unknown names throw") {
  CHECK(form_kind_from_string("velocity_mass_domain") == FormKind::VelocityMass);
  CHECK(form_kind_from_string("control_tangential_gradient_gc") == FormKind::ControlTangentialGradient);
  CHECK_THROWS_AS(form_kind_from_string("no_such_form"), InvalidArgument);
}

TEST_CASE("convection vanishes for zero advecting field") {
  const auto m = build_rectangle_mesh(0, 1, 0, 1, 2, 2);
  const auto l = build_layout(m);
  const auto c = assemble_convection(Vector::Zero(l.n_velocity()), m, l);
  CHECK(c.second_slot.norm() == 0.0);
  CHECK(c.first_slot.norm() == 0.0);
}

TEST_CASE("trilinear form matches closed-form integrals") {
  const auto m = build_rectangle_mesh(0, 1, 0, 1, 3, 3);
  const auto l = build_layout(m);
  const Vector e1 = interpolate(l, [](double, double) { return Eigen::Vector2d(1.0, 0.0); });
  const Vector sq = interpolate(l, [](double x, double) { return Eigen::Vector2d(x * x, 0.0); });
  const Vector shear = interpolate(l, [](double, double y) { return Eigen::Vector2d(y, 0.0); });
  // int d/dx (x^2) = 1.
  CHECK(trilinear(e1, sq, e1, m, l) == doctest::Approx(1.0).epsilon(1e-13));
  // Constant field transported by a shear flow: zero.
  CHECK(std::abs(trilinear(shear, e1, e1, m, l)) <= 1e-14);
  // (y, 0) . grad (x^2, 0) . (1, 0) = 2 x y, integral 1/2.
  CHECK(trilinear(shear, sq, e1, m, l) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("convection matrices agree with the trilinear form") {
  const auto m = build_rectangle_mesh(0, 1, 0, 2, 2, 3);
  const auto l = build_layout(m);
  const int n = l.n_velocity();
  const Vector a = testing::random_vector(n, 1), b = testing::random_vector(n, 2), c = testing::random_vector(n, 3);
  const double e = trilinear(a, b, c, m, l);
  const auto ca = assemble_convection(a, m, l);
  const auto cb = assemble_convection(b, m, l);
  CHECK(c.dot(ca.second_slot * b) == doctest::Approx(e).epsilon(1e-12));
  CHECK(c.dot(cb.first_slot * a) == doctest::Approx(e).epsilon(1e-12));
  const SparseMatrix hess = assemble_convection_hessian(c, m, l);
  CHECK(a.dot(hess * b) == doctest::Approx(e + trilinear(b, a, c, m, l)).epsilon(1e-12));
}

TEST_CASE("convection is skew for divergence-free fields and vanishing test functions") {
  const auto m = build_rectangle_mesh(0, 1, 0, 1, 4, 4);
  const auto l = build_layout(m);
  const Vector rot = interpolate(l, [](double x, double y) { return Eigen::Vector2d(0.5 - y, x - 0.5); });
  Vector w = testing::random_vector(l.n_velocity(), 7);
  for (int d : l.dirichlet_dofs) w[d] = 0.0;
  // Walls and inlet are Dirichlet; clear the control side too.
  for (int n : l.control_nodes) w.segment<2>(DofLayout::velocity_dof(n, 0)).setZero();
  CHECK(std::abs(trilinear(rot, w, w, m, l)) <= 1e-12 * w.squaredNorm());
}

TEST_CASE("lift carries the inflow on the inlet only") {
  const auto m = geometry::build_bifurcation_mesh(0.25);
  const auto l = build_layout(m);
  const Vector ns = unit_lift(ProblemId::NsSteady, l);
  const Vector st = unit_lift("stokes_td", l);
  for (int n = 0; n < l.n_nodes(); ++n) {
    const auto& p = l.nodes[n];
    CHECK(ns[DofLayout::velocity_dof(n, 1)] == 0.0);
    if (!l.inlet_node[n]) {
      CHECK(ns[DofLayout::velocity_dof(n, 0)] == 0.0);
      continue;
    }
    CHECK(p.x == 0.0);
    CHECK(ns[DofLayout::velocity_dof(n, 0)] == doctest::Approx(10.0 * p.y * (2.0 - p.y)));
    CHECK(st[DofLayout::velocity_dof(n, 0)] == doctest::Approx(10.0 * (p.y - 1.0) * (1.0 - p.y)));
    if (std::abs(p.y - 1.0) < 1e-12) {
      CHECK(ns[DofLayout::velocity_dof(n, 0)] == doctest::Approx(10.0));
      CHECK(st[DofLayout::velocity_dof(n, 0)] == doctest::Approx(0.0));
    }
  }
  // Corners belong to the walls.
  for (int n = 0; n < l.n_nodes(); ++n)
    if (l.nodes[n].x == 0.0 && (l.nodes[n].y == 0.0 || l.nodes[n].y == 2.0)) CHECK(ns[2 * n] == 0.0);

  const ParameterPoint mu(ProblemId::NsSteady, {1.3});
  CHECK((lift_dirichlet(mu, l) - 1.3 * ns).norm() <= 1e-14);
}

TEST_CASE("target profiles and scaling") {
  CHECK(target_profile(ProblemId::StokesTD, 0.0) == doctest::Approx(10.0));
  CHECK(target_profile(ProblemId::NsSteady, 1.0) == doctest::Approx(10.0));
  const auto m = geometry::build_bifurcation_mesh(0.5);
  const auto l = build_layout(m);
  const ParameterPoint a(ProblemId::StokesTD, {0.5, 1.5, 1.0});
  const ParameterPoint b(ProblemId::StokesTD, {0.5, 1.5, 0.25});
  const Vector va = interpolate_target(a, l), vb = interpolate_target(b, l);
  CHECK((vb - 0.25 * va).norm() <= 1e-14 * va.norm());
  for (int n = 0; n < l.n_nodes(); ++n) {
    CHECK(va[2 * n + 1] == 0.0);
    if (l.nodes[n].y == 0.0) CHECK(va[2 * n] == doctest::Approx(10.0));
  }
}

TEST_CASE("Taylor-Hood reproduces a quadratic Stokes solution exactly") {
  const auto m = build_rectangle_mesh(0, 1, 0, 1, 3, 3);
  const auto l = build_layout(m);
  const double nu = 0.7;
  auto v = [](double x, double y) { return Eigen::Vector2d(y * y, x * x); };
  auto f = [nu](double, double) { return Eigen::Vector2d(-2.0 * nu + 1.0, -2.0 * nu + 1.0); };
  const auto sol = solve_dirichlet_stokes(m, l, nu, f, v);
  auto grad = [](double x, double y) {
    Eigen::Matrix2d g;
    g << 0.0, 2.0 * y, 2.0 * x, 0.0;
    return g;
  };
  CHECK(velocity_h1_seminorm_error(m, l, sol.velocity, grad) <= 1e-10);
  CHECK(velocity_l2_error(m, l, sol.velocity, v) <= 1e-10);
  CHECK(pressure_l2_error(m, l, sol.pressure, [](double x, double y) { return x + y - 1.0; }) <= 1e-10);
}

TEST_CASE("inner products are symmetric positive definite") {
  const auto m = geometry::build_bifurcation_mesh(0.5);
  const auto l = build_layout(m);
  for (const SparseMatrix& x : {velocity_inner_product(m, l), pressure_inner_product(m, l), control_inner_product(m, l)}) {
    CHECK(asymmetry(x) <= 1e-14 * x.norm());
    Eigen::SimplicialLLT<SparseMatrix> llt(x);
    CHECK(llt.info() == Eigen::Success);
  }
}
