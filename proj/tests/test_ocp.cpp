#include "podocp/linalg.hpp"
#include "podocp/ocp.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace podocp;
using namespace podocp::ocp;
using testing::coarse_truth;

namespace {

const ParameterPoint kStokesMu(ProblemId::StokesTD, {0.5, 1.5, 1.0});

Vector control_trajectory(const OcpSolution& s) { return s.trajectory(Var::U); }

double relative_residual(const TruthProblem& truth, const ParameterPoint& mu, const Vector& x) {
  // Rows of Dirichlet dofs hold the lift constraint, not an equation.
  Vector r = truth.residual(mu, x);
  const auto mask = truth.constrained_mask();
  for (int i = 0; i < r.size(); ++i)
    if (mask[i]) r[i] = 0.0;
  return r.norm() / std::max(1.0, assemble_rhs(truth.affine(), theta(mu, truth.settings())).norm());
}

}  // namespace

TEST_CASE("theta values") {
  const auto st = testing::small_stokes();
  const Theta t = theta(ParameterPoint(ProblemId::StokesTD, {0.2, 1.6, 0.3}), st);
  CHECK(t[int(ThetaId::Stretch)] == doctest::Approx(1.6));
  CHECK(t[int(ThetaId::ViscosityXX)] == doctest::Approx(0.2 / 1.6));
  CHECK(t[int(ThetaId::ViscosityYY)] == doctest::Approx(0.2 * 1.6));
  CHECK(t[int(ThetaId::Viscosity)] == doctest::Approx(0.2));
  CHECK(t[int(ThetaId::Target)] == doctest::Approx(0.3));
  CHECK(t[int(ThetaId::Lift)] == doctest::Approx(1.0));
  auto ns = testing::small_ns();
  ns.eta = 2.0;
  const Theta u = theta(ParameterPoint(ProblemId::NsSteady, {1.2}), ns);
  CHECK(u[int(ThetaId::Viscosity)] == doctest::Approx(2.0));
  CHECK(u[int(ThetaId::Target)] == doctest::Approx(1.2));
  CHECK(u[int(ThetaId::Lift)] == doctest::Approx(1.2));
}

TEST_CASE("space-time dimension") {
  const auto truth = coarse_truth(testing::small_stokes(4));
  const auto& l = truth.layout();
  CHECK(truth.sizes().total() == 4 * l.truth_dimension());
  CHECK(truth.sizes().step_size() == 2 * l.n_velocity() + 2 * l.n_pressure() + l.n_control());
  const auto ns = coarse_truth(testing::small_ns());
  CHECK(ns.sizes().total() == ns.layout().truth_dimension());
}

TEST_CASE("KKT matrix is symmetric") {
  for (auto init : {InitialState::Steady, InitialState::Zero}) {
    auto s = testing::small_stokes(5);
    s.initial_state = init;
    const auto truth = coarse_truth(s);
    for (const auto& mu : {kStokesMu, ParameterPoint(ProblemId::StokesTD, {0.01, 2.0, 0.01})}) {
      const auto kkt = assemble_kkt_stokes_td(truth, mu);
      CHECK(linalg::relative_asymmetry(kkt.matrix) <= 1e-10);
      CHECK(linalg::relative_asymmetry(assemble_operator(truth.affine(), theta(mu, s))) <= 1e-10);
    }
  }
}

TEST_CASE("matrix-free application matches the assembled operator") {
  const auto truth = coarse_truth(testing::small_stokes(3));
  const Theta th = theta(kStokesMu, truth.settings());
  const Vector x = testing::random_vector(truth.sizes().total(), 11);
  const Vector a = assemble_operator(truth.affine(), th) * x;
  CHECK((apply_operator(truth.affine(), th, x) - a).norm() <= 1e-12 * a.norm());
}

TEST_CASE("zero data gives the zero solution") {
  auto s = testing::small_stokes(3);
  s.inflow_scale = 0.0;
  const auto truth = coarse_truth(s);
  const ParameterPoint mu(ProblemId::StokesTD, {0.5, 1.2, 0.0});
  const auto sol = solve_stokes_td(truth, mu);
  CHECK(sol.x.norm() <= 1e-12);
  CHECK(sol.cost == doctest::Approx(0.0));
}

TEST_CASE("condensed and monolithic solvers agree") {
  for (auto init : {InitialState::Steady, InitialState::Zero}) {
    auto s = testing::small_stokes(4);
    s.initial_state = init;
    const auto truth = coarse_truth(s);
    const auto a = solve_stokes_td(truth, kStokesMu, StokesSolver::Condensed);
    const auto b = solve_stokes_td(truth, kStokesMu, StokesSolver::Monolithic);
    CHECK((a.x - b.x).norm() <= 1e-8 * b.x.norm());
    CHECK(a.cost == doctest::Approx(b.cost).epsilon(1e-8));
    CHECK(relative_residual(truth, kStokesMu, a.x) <= 1e-9);
  }
}

TEST_CASE("solution satisfies the Dirichlet lift") {
  const auto truth = coarse_truth(testing::small_stokes(3));
  const auto sol = solve_stokes_td(truth, kStokesMu);
  const auto& sz = truth.sizes();
  const Vector lift = truth.lift_vector(theta(kStokesMu, truth.settings()));
  for (int n = 0; n < sz.nt; ++n)
    for (int d : truth.layout().dirichlet_dofs) {
      CHECK(sol.x[sz.index(n, Var::V, d)] == doctest::Approx(lift[sz.index(n, Var::V, d)]));
      CHECK(sol.x[sz.index(n, Var::W, d)] == 0.0);
    }
}

TEST_CASE("steady start is a Stokes flow independent of mu1 and mu3") {
  const auto truth = coarse_truth(testing::small_stokes(3));
  const Vector a = truth.initial_velocity(ParameterPoint(ProblemId::StokesTD, {0.1, 1.4, 0.2}));
  const Vector b = truth.initial_velocity(ParameterPoint(ProblemId::StokesTD, {0.9, 1.4, 0.8}));
  CHECK((a - b).norm() <= 1e-10 * a.norm());
  CHECK(a.norm() > 0.0);
  auto s = testing::small_stokes(3);
  s.initial_state = InitialState::Zero;
  CHECK(coarse_truth(s).initial_velocity(kStokesMu).norm() == 0.0);
  CHECK(coarse_truth(s).initial_rhs(kStokesMu).norm() == 0.0);
  // With zero control the steady start is a fixed point of the state equation.
  const auto fwd = solve_forward(truth, kStokesMu);
  const Vector v0 = truth.initial_velocity(kStokesMu);
  for (int n = 0; n < truth.sizes().nt; ++n) CHECK((fwd.block(Var::V, n) - v0).norm() <= 1e-9 * v0.norm());
}

TEST_CASE("optimal cost is at most the uncontrolled cost") {
  const auto truth = coarse_truth(testing::small_stokes(4));
  for (const auto& mu : {kStokesMu, ParameterPoint(ProblemId::StokesTD, {0.05, 1.1, 0.9}),
                         ParameterPoint(ProblemId::StokesTD, {1.0, 2.0, 0.1})}) {
    const auto opt = solve_stokes_td(truth, mu);
    const double j0 = evaluate_cost(truth, solve_forward(truth, mu));
    CHECK(opt.cost <= j0);
    CHECK(opt.cost == doctest::Approx(evaluate_cost(truth, opt)).epsilon(1e-12));
  }
}

TEST_CASE("a large control penalty shrinks the control") {
  const auto base = coarse_truth(testing::small_stokes(3));
  auto s = testing::small_stokes(3);
  s.alpha1 = 1e6;
  const auto heavy = coarse_truth(s);
  const double u0 = control_trajectory(solve_stokes_td(base, kStokesMu)).norm();
  const double u1 = control_trajectory(solve_stokes_td(heavy, kStokesMu)).norm();
  CHECK(u1 <= 1e-3 * u0);
}

TEST_CASE("scaling the data scales the solution") {
  const double gamma = 3.5;
  auto s = testing::small_stokes(3);
  const auto a = solve_stokes_td(coarse_truth(s), kStokesMu);
  s.inflow_scale = gamma;
  s.target_scale = gamma;
  const auto b = solve_stokes_td(coarse_truth(s), kStokesMu);
  CHECK((b.x - gamma * a.x).norm() <= 1e-9 * b.x.norm());
  CHECK(b.cost == doctest::Approx(gamma * gamma * a.cost).epsilon(1e-9));
}

TEST_CASE("cost of a matching state and a constant control") {
  for (auto problem : {ProblemId::StokesTD, ProblemId::NsSteady}) {
    const auto s = problem == ProblemId::StokesTD ? testing::small_stokes(4) : testing::small_ns();
    const auto truth = coarse_truth(s);
    const ParameterPoint mu = problem == ProblemId::StokesTD ? kStokesMu : ParameterPoint(problem, {1.1});
    const auto& sz = truth.sizes();
    const auto& l = truth.layout();
    Vector x = Vector::Zero(sz.total());
    const Vector vd = theta(mu, s)[int(ThetaId::Target)] * truth.unit_target();
    CHECK(truth.cost(mu, [&] {
      Vector y = x;
      for (int n = 0; n < sz.nt; ++n) y.segment(sz.index(n, Var::V, 0), sz.nv) = vd;
      return y;
    }()) == doctest::Approx(0.0));
    const double c = 0.4;
    for (int n = 0; n < sz.nt; ++n) {
      x.segment(sz.index(n, Var::V, 0), sz.nv) = vd;
      for (int node : l.control_nodes) x[sz.index(n, Var::U, l.control_dof(node, 0))] = c;
    }
    const double gc = truth.mesh().tagged_length(geometry::BoundaryTag::Control);
    CHECK(truth.cost(mu, x) == doctest::Approx(0.5 * s.control_weight() * gc * c * c).epsilon(1e-12));
  }
}

TEST_CASE("navier-stokes Jacobian matches central differences") {
  const auto truth = coarse_truth(testing::small_ns());
  const ParameterPoint mu(ProblemId::NsSteady, {1.1});
  const int n = truth.sizes().total();
  const Vector x = testing::random_vector(n, 21);
  const SparseMatrix jac = truth.jacobian(mu, x);
  const double eps = 1e-6;
  for (unsigned k = 0; k < 20; ++k) {
    const Vector d = testing::random_vector(n, 100 + k).normalized();
    const Vector fd = (truth.residual(mu, x + eps * d) - truth.residual(mu, x - eps * d)) / (2.0 * eps);
    const Vector jd = jac * d;
    CHECK((fd - jd).norm() <= 1e-5 * std::max(1.0, jd.norm()));
  }
}

TEST_CASE("navier-stokes Jacobian at rest equals the linear operator") {
  const auto truth = coarse_truth(testing::small_ns());
  const ParameterPoint mu(ProblemId::NsSteady, {0.9});
  const SparseMatrix j = truth.jacobian(mu, Vector::Zero(truth.sizes().total()));
  const SparseMatrix a = assemble_operator(truth.affine(), theta(mu, truth.settings()));
  CHECK((j - a).norm() <= 1e-13 * a.norm());
}

TEST_CASE("navier-stokes control problem converges and beats no control") {
  const auto truth = coarse_truth(testing::small_ns());
  for (double m : {0.7, 1.1, 1.5}) {
    const ParameterPoint mu(ProblemId::NsSteady, {m});
    const auto sol = solve_ns_ocp(truth, mu);
    CHECK(sol.diagnostics.newton_iterations <= truth.settings().newton_max_iter);
    const auto& h = sol.diagnostics.residual_history;
    REQUIRE(h.size() >= 2);
    CHECK(h.back() <= truth.settings().newton_tol * std::max(1.0, h.front()));
    for (std::size_t i = 2; i < h.size(); ++i) CHECK(h[i] < h[i - 1]);
    CHECK(sol.cost <= evaluate_cost(truth, solve_forward(truth, mu)));
  }
}

TEST_CASE("high viscosity navier-stokes converges in at most three steps") {
  auto s = testing::small_ns();
  s.eta = 1e3;
  const auto truth = coarse_truth(s);
  const auto sol = solve_ns_ocp(truth, ParameterPoint(ProblemId::NsSteady, {1.0}));
  CHECK(sol.diagnostics.newton_iterations <= 3);
}

TEST_CASE("solve_ocp dispatches on the problem") {
  const auto truth = coarse_truth(testing::small_stokes(2));
  const auto a = solve_ocp(truth, kStokesMu);
  const auto b = solve_stokes_td(truth, kStokesMu);
  CHECK((a.x - b.x).norm() <= 1e-14 * b.x.norm());
}

TEST_CASE("wrong parameter arity is rejected") {
  CHECK_THROWS_AS(ParameterPoint(ProblemId::StokesTD, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(ParameterPoint(ProblemId::NsSteady, {1.0, 2.0}), InvalidArgument);
}
