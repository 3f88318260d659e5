#include "podocp/ocp.hpp"

#include "podocp/linalg.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace podocp::ocp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void add_block(std::vector<Triplet>& trip, const SparseMatrix& m, int r0, int c0, double s,
               bool transposed = false) {
  if (s == 0.0) return;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      if (transposed) trip.emplace_back(r0 + it.col(), c0 + it.row(), s * it.value());
      else trip.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
    }
}

int coupled_step(int n, TimeCoupling c) {
  return c == TimeCoupling::Same ? n : c == TimeCoupling::Previous ? n - 1 : n + 1;
}

std::shared_ptr<const SparseMatrix> share(SparseMatrix m) {
  m.makeCompressed();
  return std::make_shared<const SparseMatrix>(std::move(m));
}

Vector masked(Vector r, const std::vector<char>& constrained) {
  for (int i = 0; i < r.size(); ++i)
    if (constrained[i]) r[i] = 0.0;
  return r;
}

}  // namespace

std::string_view to_string(Var var) {
  static constexpr std::string_view names[] = {"v", "p", "u", "w", "q"};
  return names[static_cast<int>(var)];
}

Theta theta(const ParameterPoint& mu, const ProblemSettings& s) {
  if (mu.problem() != s.problem) throw InvalidArgument("theta: parameter is for another problem");
  Theta th{};
  th[static_cast<int>(ThetaId::One)] = 1.0;
  if (s.problem == ProblemId::StokesTD) {
    const double mu1 = mu[0], mu2 = mu[1], mu3 = mu[2];
    const auto g = geometry::affine_geometry_factors(mu2);
    th[static_cast<int>(ThetaId::Stretch)] = g.mass_stretched;
    th[static_cast<int>(ThetaId::ViscosityXX)] = mu1 * g.stiffness_xx_stretched;
    th[static_cast<int>(ThetaId::ViscosityYY)] = mu1 * g.stiffness_yy_stretched;
    th[static_cast<int>(ThetaId::Viscosity)] = mu1;
    th[static_cast<int>(ThetaId::Target)] = mu3 * s.target_scale;
    th[static_cast<int>(ThetaId::Lift)] = s.inflow_scale;
  } else {
    th[static_cast<int>(ThetaId::Stretch)] = 1.0;
    th[static_cast<int>(ThetaId::ViscosityXX)] = s.eta;
    th[static_cast<int>(ThetaId::ViscosityYY)] = s.eta;
    th[static_cast<int>(ThetaId::Viscosity)] = s.eta;
    th[static_cast<int>(ThetaId::Target)] = mu[0] * s.target_scale;
    th[static_cast<int>(ThetaId::Lift)] = mu[0] * s.inflow_scale;
  }
  return th;
}

int BlockSizes::size(Var var) const {
  switch (var) {
    case Var::V:
    case Var::W: return nv;
    case Var::P:
    case Var::Q: return np;
    case Var::U: return nu;
  }
  return 0;
}

int BlockSizes::offset(Var var) const {
  switch (var) {
    case Var::V: return 0;
    case Var::P: return nv;
    case Var::U: return nv + np;
    case Var::W: return nv + np + nu;
    case Var::Q: return 2 * nv + np + nu;
  }
  return 0;
}

SparseMatrix assemble_operator(const AffineKkt& kkt, const Theta& th) {
  const auto& sz = kkt.sizes;
  std::vector<Triplet> trip;
  std::size_t nnz = 0;
  for (const auto& t : kkt.terms) nnz += t.matrix->nonZeros();
  trip.reserve(nnz * sz.nt);
  for (const auto& t : kkt.terms) {
    const double s = t.scale * th[static_cast<int>(t.theta)];
    for (int n = 0; n < sz.nt; ++n) {
      const int m = coupled_step(n, t.coupling);
      if (m < 0 || m >= sz.nt) continue;
      add_block(trip, *t.matrix, sz.index(n, t.row, 0), sz.index(m, t.col, 0), s, t.transposed);
    }
  }
  SparseMatrix a(sz.total(), sz.total());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

Vector assemble_rhs(const AffineKkt& kkt, const Theta& th) {
  const auto& sz = kkt.sizes;
  Vector f = Vector::Zero(sz.total());
  for (const auto& r : kkt.rhs) {
    const double s = r.scale * th[static_cast<int>(r.theta)];
    for (int n = 0; n < sz.nt; ++n) f.segment(sz.index(n, r.row, 0), r.vector->size()) += s * *r.vector;
  }
  return f;
}

Vector apply_operator(const AffineKkt& kkt, const Theta& th, const Vector& x) {
  const auto& sz = kkt.sizes;
  if (x.size() != sz.total()) throw InvalidArgument("apply_operator: vector has wrong length");
  Vector y = Vector::Zero(sz.total());
  for (const auto& t : kkt.terms) {
    const double s = t.scale * th[static_cast<int>(t.theta)];
    if (s == 0.0) continue;
    const int rows = t.transposed ? t.matrix->cols() : t.matrix->rows();
    const int cols = t.transposed ? t.matrix->rows() : t.matrix->cols();
    for (int n = 0; n < sz.nt; ++n) {
      const int m = coupled_step(n, t.coupling);
      if (m < 0 || m >= sz.nt) continue;
      const auto xs = x.segment(sz.index(m, t.col, 0), cols);
      auto ys = y.segment(sz.index(n, t.row, 0), rows);
      if (t.transposed) ys.noalias() += s * (t.matrix->transpose() * xs);
      else ys.noalias() += s * (*t.matrix * xs);
    }
  }
  return y;
}

Vector OcpSolution::block(Var var, int step) const {
  return x.segment(sizes.index(step, var, 0), sizes.size(var));
}

Vector OcpSolution::trajectory(Var var) const {
  const int n = sizes.size(var);
  Vector out(n * sizes.nt);
  for (int s = 0; s < sizes.nt; ++s) out.segment(s * n, n) = block(var, s);
  return out;
}

// ---------------------------------------------------------------------------
// TruthProblem
// ---------------------------------------------------------------------------

TruthProblem::TruthProblem(geometry::Mesh mesh, ProblemSettings settings)
    : mesh_(std::move(mesh)), layout_(fem::build_layout(mesh_)), settings_(std::move(settings)) {
  if (settings_.problem == ProblemId::StokesTD && settings_.nt < 1)
    throw InvalidArgument("number of time steps must be at least 1");
  using fem::FormKind;
  const std::array<int, 1> channel{geometry::Channel};
  const std::array<int, 3> rest{geometry::Junction, geometry::UpperBranch, geometry::LowerBranch};
  auto form = [&](FormKind k, std::span<const int> r = {}) {
    return fem::assemble_form(k, mesh_, layout_, r);
  };
  mass_channel_ = share(form(FormKind::VelocityMass, channel));
  mass_rest_ = share(form(FormKind::VelocityMass, rest));
  stiff_xx_channel_ = share(form(FormKind::VelocityStiffnessXX, channel));
  stiff_yy_channel_ = share(form(FormKind::VelocityStiffnessYY, channel));
  stiff_rest_ = share(form(FormKind::VelocityStiffness, rest));
  SparseMatrix div_fixed = form(FormKind::PressureDivergenceX, channel);
  div_fixed += form(FormKind::PressureDivergence, rest);
  div_fixed_ = share(std::move(div_fixed));
  div_stretched_ = share(form(FormKind::PressureDivergenceY, channel));
  obs_mass_ = share(form(FormKind::ObservationMass));
  SparseMatrix penalty = settings_.control_weight() * form(FormKind::ControlMass);
  penalty += settings_.control_gradient_weight() * form(FormKind::ControlTangentialGradient);
  control_penalty_ = share(std::move(penalty));
  control_coupling_ = share(form(FormKind::ControlStateCoupling));
  unit_lift_ = std::make_shared<const Vector>(fem::unit_lift(settings_.problem, layout_));
  unit_target_ = std::make_shared<const Vector>(fem::unit_target(settings_.problem, layout_));
  obs_target_rhs_ = std::make_shared<const Vector>(*obs_mass_ * *unit_target_);

  velocity_product_ = fem::velocity_inner_product(mesh_, layout_);
  pressure_product_ = fem::pressure_inner_product(mesh_, layout_);
  control_product_ = fem::control_inner_product(mesh_, layout_);

  kkt_.sizes = {layout_.n_velocity(), layout_.n_pressure(), layout_.n_control(),
                settings_.time_steps()};
  build_terms();
}

void TruthProblem::build_terms() {
  const bool transient = settings_.problem == ProblemId::StokesTD;
  const double dt = settings_.time_step();
  auto& terms = kkt_.terms;
  terms.clear();

  // Constraint operator: rows w (and p), columns v (and p, u).
  // The adjoint rows carry the transposes so the system stays symmetric.
  auto pair = [&](Var row, Var col, std::shared_ptr<const SparseMatrix> m, double scale,
                  ThetaId id, TimeCoupling c, std::string name) {
    const TimeCoupling mirrored = c == TimeCoupling::Previous ? TimeCoupling::Next
                                  : c == TimeCoupling::Next   ? TimeCoupling::Previous
                                                              : c;
    terms.push_back({row, col, m, false, scale, c, id, name});
    terms.push_back({col, row, m, true, scale, mirrored, id, name + "^T"});
  };

  if (transient) {
    pair(Var::W, Var::V, mass_channel_, 1.0, ThetaId::Stretch, TimeCoupling::Same, "mass_channel");
    pair(Var::W, Var::V, mass_rest_, 1.0, ThetaId::One, TimeCoupling::Same, "mass_rest");
    pair(Var::W, Var::V, mass_channel_, -1.0, ThetaId::Stretch, TimeCoupling::Previous,
         "mass_channel_prev");
    pair(Var::W, Var::V, mass_rest_, -1.0, ThetaId::One, TimeCoupling::Previous, "mass_rest_prev");
  }
  pair(Var::W, Var::V, stiff_xx_channel_, dt, ThetaId::ViscosityXX, TimeCoupling::Same,
       "stiffness_xx_channel");
  pair(Var::W, Var::V, stiff_yy_channel_, dt, ThetaId::ViscosityYY, TimeCoupling::Same,
       "stiffness_yy_channel");
  pair(Var::W, Var::V, stiff_rest_, dt, ThetaId::Viscosity, TimeCoupling::Same, "stiffness_rest");

  // D is N_p x N_v: rows p/q are D, rows w/v carry D^T.
  pair(Var::P, Var::W, div_fixed_, dt, ThetaId::One, TimeCoupling::Same, "div_fixed");
  pair(Var::P, Var::W, div_stretched_, dt, ThetaId::Stretch, TimeCoupling::Same, "div_stretched");
  pair(Var::Q, Var::V, div_fixed_, dt, ThetaId::One, TimeCoupling::Same, "div_fixed_q");
  pair(Var::Q, Var::V, div_stretched_, dt, ThetaId::Stretch, TimeCoupling::Same,
       "div_stretched_q");

  pair(Var::W, Var::U, control_coupling_, dt, ThetaId::One, TimeCoupling::Same, "control_coupling");

  terms.push_back({Var::V, Var::V, obs_mass_, false, dt, TimeCoupling::Same, ThetaId::One,
                   "observation_mass"});
  terms.push_back({Var::U, Var::U, control_penalty_, false, dt, TimeCoupling::Same, ThetaId::One,
                   "control_penalty"});

  kkt_.rhs = {{Var::V, obs_target_rhs_, dt, ThetaId::Target, "observation_target"}};
}

std::vector<TruthProblem::Piece> TruthProblem::mass_pieces() const {
  return {{ThetaId::Stretch, mass_channel_}, {ThetaId::One, mass_rest_}};
}

std::vector<TruthProblem::Piece> TruthProblem::viscous_pieces() const {
  return {{ThetaId::ViscosityXX, stiff_xx_channel_},
          {ThetaId::ViscosityYY, stiff_yy_channel_},
          {ThetaId::Viscosity, stiff_rest_}};
}

std::vector<TruthProblem::Piece> TruthProblem::divergence_pieces() const {
  return {{ThetaId::One, div_fixed_}, {ThetaId::Stretch, div_stretched_}};
}

SparseMatrix TruthProblem::mass(const Theta& th) const {
  SparseMatrix m = th[static_cast<int>(ThetaId::Stretch)] * *mass_channel_;
  m += *mass_rest_;
  return m;
}

SparseMatrix TruthProblem::viscous(const Theta& th) const {
  SparseMatrix k = th[static_cast<int>(ThetaId::ViscosityXX)] * *stiff_xx_channel_;
  k += th[static_cast<int>(ThetaId::ViscosityYY)] * *stiff_yy_channel_;
  k += th[static_cast<int>(ThetaId::Viscosity)] * *stiff_rest_;
  return k;
}

SparseMatrix TruthProblem::divergence(const Theta& th) const {
  SparseMatrix d = th[static_cast<int>(ThetaId::Stretch)] * *div_stretched_;
  d += *div_fixed_;
  return d;
}

Vector TruthProblem::lift_vector(const Theta& th) const {
  const auto& sz = sizes();
  Vector x = Vector::Zero(sz.total());
  const double s = th[static_cast<int>(ThetaId::Lift)];
  for (int n = 0; n < sz.nt; ++n) x.segment(sz.index(n, Var::V, 0), sz.nv) = s * *unit_lift_;
  return x;
}

std::vector<char> TruthProblem::constrained_mask() const {
  const auto& sz = sizes();
  std::vector<char> mask(sz.total(), 0);
  for (int n = 0; n < sz.nt; ++n)
    for (int d : layout_.dirichlet_dofs) {
      mask[sz.index(n, Var::V, d)] = 1;
      mask[sz.index(n, Var::W, d)] = 1;
    }
  return mask;
}

Vector TruthProblem::unit_steady_flow(const Theta& th) const {
  const int nv = layout_.n_velocity(), np = layout_.n_pressure(), n = nv + np;
  const SparseMatrix d = divergence(th);
  std::vector<Triplet> trip;
  add_block(trip, viscous(th), 0, 0, 1.0);
  add_block(trip, d, 0, nv, 1.0, true);
  add_block(trip, d, nv, 0, 1.0);
  SparseMatrix s(n, n);
  s.setFromTriplets(trip.begin(), trip.end());
  std::vector<char> constrained(n, 0);
  for (int i : layout_.dirichlet_dofs) constrained[i] = 1;
  Vector lift = Vector::Zero(n);
  lift.head(nv) = *unit_lift_;
  const linalg::SparseLu lu(linalg::eliminate_symmetric(s, constrained));
  return lu.solve(masked(Vector(-(s * lift)), constrained));
}

Vector TruthProblem::initial_velocity(const ParameterPoint& mu) const {
  const int nv = layout_.n_velocity();
  if (problem() != ProblemId::StokesTD || settings_.initial_state == InitialState::Zero) return Vector::Zero(nv);
  const Theta th = theta(mu, settings_);
  const double l = th[static_cast<int>(ThetaId::Lift)];
  return l * (*unit_lift_ + unit_steady_flow(th).head(nv));
}

Vector TruthProblem::initial_rhs(const ParameterPoint& mu) const {
  const auto& sz = sizes();
  Vector b = Vector::Zero(sz.total());
  if (problem() != ProblemId::StokesTD || settings_.initial_state == InitialState::Zero) return b;
  b.segment(sz.index(0, Var::W, 0), sz.nv) = mass(theta(mu, settings_)) * initial_velocity(mu);
  return b;
}

Vector TruthProblem::residual(const ParameterPoint& mu, const Vector& x) const {
  const Theta th = theta(mu, settings_);
  Vector r = apply_operator(kkt_, th, x) - assemble_rhs(kkt_, th) - initial_rhs(mu);
  if (problem() == ProblemId::NsSteady) r += convection_residual(*this, x);
  return r;
}

SparseMatrix TruthProblem::jacobian(const ParameterPoint& mu, const Vector& x) const {
  SparseMatrix j = assemble_operator(kkt_, theta(mu, settings_));
  if (problem() == ProblemId::NsSteady) j += convection_jacobian(*this, x);
  return j;
}

double TruthProblem::cost(const ParameterPoint& mu, const Vector& x) const {
  const auto& sz = sizes();
  if (x.size() != sz.total()) throw InvalidArgument("cost: vector has wrong length");
  const Theta th = theta(mu, settings_);
  const Vector vd = th[static_cast<int>(ThetaId::Target)] * *unit_target_;
  const double dt = settings_.time_step();
  double j = 0.0;
  for (int n = 0; n < sz.nt; ++n) {
    const Vector e = x.segment(sz.index(n, Var::V, 0), sz.nv) - vd;
    const auto u = x.segment(sz.index(n, Var::U, 0), sz.nu);
    j += 0.5 * dt * (e.dot(*obs_mass_ * e) + u.dot(*control_penalty_ * u));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Convection
// ---------------------------------------------------------------------------

Vector convection_residual(const TruthProblem& truth, const Vector& x) {
  const auto& sz = truth.sizes();
  const Vector v = x.segment(sz.offset(Var::V), sz.nv);
  const Vector w = x.segment(sz.offset(Var::W), sz.nv);
  const auto c = fem::assemble_convection(v, truth.mesh(), truth.layout());
  Vector r = Vector::Zero(sz.total());
  r.segment(sz.offset(Var::W), sz.nv) = c.second_slot * v;
  r.segment(sz.offset(Var::V), sz.nv) =
      c.second_slot.transpose() * w + c.first_slot.transpose() * w;
  return r;
}

SparseMatrix convection_jacobian(const TruthProblem& truth, const Vector& x) {
  const auto& sz = truth.sizes();
  const Vector v = x.segment(sz.offset(Var::V), sz.nv);
  const Vector w = x.segment(sz.offset(Var::W), sz.nv);
  const auto c = fem::assemble_convection(v, truth.mesh(), truth.layout());
  SparseMatrix lin = c.second_slot;
  lin += c.first_slot;
  const SparseMatrix h = fem::assemble_convection_hessian(w, truth.mesh(), truth.layout());
  std::vector<Triplet> trip;
  trip.reserve(2 * lin.nonZeros() + h.nonZeros());
  add_block(trip, lin, sz.offset(Var::W), sz.offset(Var::V), 1.0);
  add_block(trip, lin, sz.offset(Var::V), sz.offset(Var::W), 1.0, true);
  add_block(trip, h, sz.offset(Var::V), sz.offset(Var::V), 1.0);
  SparseMatrix j(sz.total(), sz.total());
  j.setFromTriplets(trip.begin(), trip.end());
  return j;
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

namespace {

/// Linear part of the KKT system (Stokes optimal control) with lifting.
Vector solve_linear_kkt(const TruthProblem& truth, const ParameterPoint& mu, double* residual) {
  const KktSystem sys = assemble_kkt_stokes_td(truth, mu);
  Vector b = masked(sys.rhs - sys.matrix * sys.lift, sys.constrained);
  const SparseMatrix a = linalg::eliminate_symmetric(sys.matrix, sys.constrained);
  linalg::SparseLu lu;
  try {
    lu.factorize(a);
  } catch (const SolverFailure& e) {
    std::ostringstream os;
    os << e.what() << " [KKT blocks v,p,u,w,q sizes " << sys.sizes.nv << "," << sys.sizes.np << ","
       << sys.sizes.nu << "," << sys.sizes.nv << "," << sys.sizes.np << " x " << sys.sizes.nt
       << " steps, mu = " << mu.str() << "]";
    throw SolverFailure(os.str());
  }
  const Vector xh = lu.solve(b);
  const double bn = b.norm();
  const double res = (a * xh - b).norm() / (bn > 0.0 ? bn : 1.0);
  if (residual) *residual = res;
  if (!(res <= 1e-9))
    throw SolverFailure("KKT solve residual " + std::to_string(res) + " above 1e-9 at mu = " +
                        mu.str());
  return xh + sys.lift;
}

}  // namespace

KktSystem assemble_kkt_stokes_td(const TruthProblem& truth, const ParameterPoint& mu) {
  const Theta th = theta(mu, truth.settings());
  KktSystem sys;
  sys.sizes = truth.sizes();
  sys.matrix = assemble_operator(truth.affine(), th);
  sys.rhs = assemble_rhs(truth.affine(), th) + truth.initial_rhs(mu);
  sys.lift = truth.lift_vector(th);
  sys.constrained = truth.constrained_mask();
  return sys;
}

namespace {

/// Relative KKT residual of a lifted space-time solution on the free rows.
double relative_kkt_residual(const TruthProblem& truth, const ParameterPoint& mu, const Vector& x) {
  const auto mask = truth.constrained_mask();
  const Theta th = theta(mu, truth.settings());
  const Vector lift = truth.lift_vector(th);
  const Vector b = masked(
      assemble_rhs(truth.affine(), th) + truth.initial_rhs(mu) - apply_operator(truth.affine(), th, lift), mask);
  const Vector r = masked(truth.residual(mu, x), mask);
  const double bn = b.norm();
  return r.norm() / (bn > 0.0 ? bn : 1.0);
}

Vector solve_stokes_condensed(const TruthProblem& truth, const ParameterPoint& mu) {
  const auto& sz = truth.sizes();
  const Theta th = theta(mu, truth.settings());
  const double dt = truth.settings().time_step();
  const int nv = sz.nv, np = sz.np, nu = sz.nu, nt = sz.nt, n = nv + np;

  const SparseMatrix m = truth.mass(th);
  SparseMatrix vv = m;
  vv += dt * truth.viscous(th);
  const SparseMatrix d = truth.divergence(th);
  std::vector<Triplet> trip;
  add_block(trip, vv, 0, 0, 1.0);
  add_block(trip, d, 0, nv, dt, true);
  add_block(trip, d, nv, 0, dt);
  SparseMatrix e(n, n);
  e.setFromTriplets(trip.begin(), trip.end());
  std::vector<char> constrained(n, 0);
  for (int i : truth.layout().dirichlet_dofs) constrained[i] = 1;
  const linalg::SparseLu lu(linalg::eliminate_symmetric(e, constrained));

  // Observed velocity dofs and the observation mass restricted to them.
  const SparseMatrix& mo = truth.observation_mass();
  std::vector<int> obs;
  {
    std::vector<char> seen(nv, 0);
    for (int k = 0; k < mo.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(mo, k); it; ++it) seen[it.row()] = 1;
    for (int i = 0; i < nv; ++i)
      if (seen[i]) obs.push_back(i);
  }
  const int no = static_cast<int>(obs.size());
  std::vector<int> obs_pos(nv, -1);
  for (int i = 0; i < no; ++i) obs_pos[obs[i]] = i;
  Matrix mo_dense = Matrix::Zero(no, no);
  for (int k = 0; k < mo.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(mo, k); it; ++it)
      mo_dense(obs_pos[it.row()], obs_pos[it.col()]) += it.value();
  auto observe = [&](const Vector& v) {
    Vector o(no);
    for (int i = 0; i < no; ++i) o[i] = v[obs[i]];
    return o;
  };

  // Forward sweep from v = 0 with the given control (may be empty) and lift.
  const Vector lift_v = th[static_cast<int>(ThetaId::Lift)] * truth.unit_lift();
  const Vector v_initial = truth.initial_velocity(mu);
  auto forward = [&](const Vector& control, bool with_lift, auto&& visit) {
    Vector lift = Vector::Zero(n);
    if (with_lift) lift.head(nv) = lift_v;
    const Vector lift_rhs = e * lift;
    Vector v_prev = with_lift ? v_initial : Vector(Vector::Zero(nv));
    for (int step = 0; step < nt; ++step) {
      Vector f = Vector::Zero(n);
      f.head(nv) = m * v_prev;
      if (control.size()) f.head(nv) -= dt * (truth.control_coupling() * control.segment(step * nu, nu));
      const Vector z = lu.solve(masked(f - lift_rhs, constrained)) + lift;
      v_prev = z.head(nv);
      visit(step, z);
    }
  };

  // Impulse responses: unit control in dof j at step 0.
  std::vector<Matrix> impulse(nu, Matrix(no, nt));
  for (int j = 0; j < nu; ++j) {
    Vector u = Vector::Zero(nu * nt);
    u[j] = 1.0;
    Matrix& resp = impulse[j];
    Vector v_prev = Vector::Zero(nv);
    for (int step = 0; step < nt; ++step) {
      Vector f = Vector::Zero(n);
      f.head(nv) = m * v_prev;
      if (step == 0) f.head(nv) -= dt * (truth.control_coupling() * u.head(nu));
      const Vector z = lu.solve(masked(f, constrained));
      v_prev = z.head(nv);
      resp.col(step) = observe(v_prev);
    }
  }

  const Vector vd = th[static_cast<int>(ThetaId::Target)] * truth.unit_target();
  const Vector od = observe(vd);
  Matrix free_misfit(no, nt);
  forward(Vector(), true, [&](int step, const Vector& z) { free_misfit.col(step) = observe(z.head(nv)) - od; });

  // J(u) = dt/2 sum_n |o0_n + (G u)_n - od|^2_Mo + dt/2 sum_n u_n^T R u_n.
  const int nc = nu * nt;
  std::vector<Matrix> weighted(nu);
  for (int j = 0; j < nu; ++j) weighted[j] = mo_dense * impulse[j];
  Matrix h = Matrix::Zero(nc, nc);
  Vector g = Vector::Zero(nc);
  for (int l = 0; l < nt; ++l) {
    for (int i = 0; i < nu; ++i) {
      const int row = l * nu + i;
      double gi = 0.0;
      for (int s = l; s < nt; ++s) gi += weighted[i].col(s - l).dot(free_misfit.col(s));
      g[row] = dt * gi;
      for (int k = 0; k <= l; ++k) {
        for (int j = 0; j < nu; ++j) {
          double hij = 0.0;
          for (int s = l; s < nt; ++s) hij += weighted[i].col(s - l).dot(impulse[j].col(s - k));
          h(row, k * nu + j) = dt * hij;
        }
      }
    }
  }
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  const Matrix r = dt * Matrix(truth.control_penalty());
  for (int l = 0; l < nt; ++l) h.block(l * nu, l * nu, nu, nu) += r;
  const Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success)
    throw SolverFailure("reduced control Hessian is not positive definite at mu = " + mu.str());
  const Vector u = llt.solve(-g);

  Vector x = Vector::Zero(sz.total());
  std::vector<Vector> misfit(nt);
  forward(u, true, [&](int step, const Vector& z) {
    x.segment(sz.index(step, Var::V, 0), nv) = z.head(nv);
    x.segment(sz.index(step, Var::P, 0), np) = z.tail(np);
    x.segment(sz.index(step, Var::U, 0), nu) = u.segment(step * nu, nu);
    misfit[step] = z.head(nv) - vd;
  });
  // Adjoint: E [w_n; q_n] = [M w_{n+1} - dt Mo (v_n - vd); 0], w = 0 on Dirichlet dofs.
  Vector w_next = Vector::Zero(nv);
  for (int step = nt - 1; step >= 0; --step) {
    Vector f = Vector::Zero(n);
    f.head(nv) = m * w_next - dt * (mo * misfit[step]);
    const Vector z = lu.solve(masked(f, constrained));
    x.segment(sz.index(step, Var::W, 0), nv) = z.head(nv);
    x.segment(sz.index(step, Var::Q, 0), np) = z.tail(np);
    w_next = z.head(nv);
  }
  return x;
}

}  // namespace

OcpSolution solve_stokes_td(const TruthProblem& truth, const ParameterPoint& mu,
                            StokesSolver method) {
  if (truth.problem() != ProblemId::StokesTD)
    throw InvalidArgument("solve_stokes_td called on a steady problem");
  const auto start = Clock::now();
  OcpSolution sol;
  sol.mu = mu;
  sol.sizes = truth.sizes();
  if (method == StokesSolver::Monolithic) {
    sol.x = solve_linear_kkt(truth, mu, nullptr);
  } else {
    sol.x = solve_stokes_condensed(truth, mu);
  }
  const double res = relative_kkt_residual(truth, mu, sol.x);
  if (!(res <= 1e-9))
    throw SolverFailure("space-time KKT residual " + std::to_string(res) + " above 1e-9 at mu = " +
                        mu.str());
  sol.diagnostics.residual_history = {res};
  sol.diagnostics.final_residual = res;
  sol.cost = truth.cost(mu, sol.x);
  sol.diagnostics.seconds = seconds_since(start);
  return sol;
}

KktSystem assemble_newton_step_ns(const TruthProblem& truth, const ParameterPoint& mu,
                                  const OcpSolution& current) {
  if (current.x.size() != truth.sizes().total())
    throw InvalidArgument("Newton step: iterate has wrong length");
  KktSystem sys;
  sys.sizes = truth.sizes();
  sys.matrix = truth.jacobian(mu, current.x);
  sys.rhs = -truth.residual(mu, current.x);
  sys.lift = truth.lift_vector(theta(mu, truth.settings()));
  sys.constrained = truth.constrained_mask();
  return sys;
}

OcpSolution solve_ns_ocp(const TruthProblem& truth, const ParameterPoint& mu) {
  const auto start = Clock::now();
  const auto& settings = truth.settings();
  const auto mask = truth.constrained_mask();
  OcpSolution sol;
  sol.mu = mu;
  sol.sizes = truth.sizes();

  const double scale =
      std::max(1.0, masked(truth.residual(mu, truth.lift_vector(theta(mu, settings))), mask).norm());
  const double tol = settings.newton_tol * scale;

  sol.x = solve_linear_kkt(truth, mu, nullptr);
  Vector r = masked(truth.residual(mu, sol.x), mask);
  double rn = r.norm();
  auto& hist = sol.diagnostics.residual_history;
  hist.push_back(rn);
  int it = 0;
  while (rn > tol) {
    if (it >= settings.newton_max_iter) {
      std::ostringstream os;
      os << "Newton did not converge in " << settings.newton_max_iter << " iterations at mu = "
         << mu.str() << " (residual " << rn << ", target " << tol << ")";
      throw NonConvergence(os.str(), hist);
    }
    const SparseMatrix j = linalg::eliminate_symmetric(truth.jacobian(mu, sol.x), mask);
    const Vector dx = linalg::SparseLu(j).solve(Vector(-r));
    double step = 1.0;
    while (true) {
      const Vector trial = sol.x + step * dx;
      Vector rt = masked(truth.residual(mu, trial), mask);
      const double rtn = rt.norm();
      if (std::isfinite(rtn) && rtn <= (1.0 - 1e-4 * step) * rn) {
        sol.x = trial;
        r = std::move(rt);
        rn = rtn;
        break;
      }
      step *= 0.5;
      if (step < std::ldexp(1.0, -10)) {
        std::ostringstream os;
        os << "line search stagnated at mu = " << mu.str() << " (residual " << rn << ")";
        throw LineSearchStagnation(os.str(), hist);
      }
    }
    ++it;
    hist.push_back(rn);
  }
  sol.diagnostics.newton_iterations = it;
  sol.diagnostics.final_residual = rn;
  sol.cost = truth.cost(mu, sol.x);
  sol.diagnostics.seconds = seconds_since(start);
  return sol;
}

OcpSolution solve_ocp(const TruthProblem& truth, const ParameterPoint& mu) {
  return truth.problem() == ProblemId::StokesTD ? solve_stokes_td(truth, mu) : solve_ns_ocp(truth, mu);
}

OcpSolution solve_forward(const TruthProblem& truth, const ParameterPoint& mu,
                          const Vector& control) {
  const auto start = Clock::now();
  const auto& sz = truth.sizes();
  const auto& settings = truth.settings();
  if (control.size() != 0 && control.size() != sz.nu * sz.nt)
    throw InvalidArgument("forward solve: control trajectory has wrong length");
  const Theta th = theta(mu, settings);
  const double dt = settings.time_step();
  const int nv = sz.nv, np = sz.np, n = nv + np;

  const SparseMatrix a = truth.viscous(th);
  const SparseMatrix d = truth.divergence(th);
  const SparseMatrix m = truth.mass(th);
  const bool transient = truth.problem() == ProblemId::StokesTD;

  std::vector<char> constrained(n, 0);
  for (int i : truth.layout().dirichlet_dofs) constrained[i] = 1;
  Vector lift = Vector::Zero(n);
  lift.head(nv) = th[static_cast<int>(ThetaId::Lift)] * truth.unit_lift();

  auto stokes_block = [&](const SparseMatrix& vv) {
    std::vector<Triplet> trip;
    add_block(trip, vv, 0, 0, 1.0);
    add_block(trip, d, 0, nv, dt, true);
    add_block(trip, d, nv, 0, dt);
    SparseMatrix s(n, n);
    s.setFromTriplets(trip.begin(), trip.end());
    return s;
  };

  OcpSolution sol;
  sol.mu = mu;
  sol.sizes = sz;
  sol.x = Vector::Zero(sz.total());
  Vector v_prev = truth.initial_velocity(mu);

  if (transient) {
    SparseMatrix vv = m;
    vv += dt * a;
    const SparseMatrix s = stokes_block(vv);
    const linalg::SparseLu lu(linalg::eliminate_symmetric(s, constrained));
    for (int step = 0; step < sz.nt; ++step) {
      Vector f = Vector::Zero(n);
      f.head(nv) = m * v_prev;
      if (control.size()) {
        const Vector u = control.segment(step * sz.nu, sz.nu);
        f.head(nv) -= dt * (truth.control_coupling() * u);
        sol.x.segment(sz.index(step, Var::U, 0), sz.nu) = u;
      }
      const Vector z = lu.solve(Vector(masked(f - s * lift, constrained))) + lift;
      sol.x.segment(sz.index(step, Var::V, 0), nv) = z.head(nv);
      sol.x.segment(sz.index(step, Var::P, 0), np) = z.tail(np);
      v_prev = z.head(nv);
    }
  } else {
    Vector cu = Vector::Zero(nv);
    if (control.size()) {
      cu = truth.control_coupling() * control;
      sol.x.segment(sz.offset(Var::U), sz.nu) = control;
    }
    // Stokes start, then Newton on the state equation.
    const SparseMatrix s = stokes_block(a);
    Vector f = Vector::Zero(n);
    f.head(nv) = -cu;
    Vector z = linalg::SparseLu(linalg::eliminate_symmetric(s, constrained))
                   .solve(Vector(masked(f - s * lift, constrained))) +
               lift;
    auto state_residual = [&](const Vector& zz) {
      const Vector v = zz.head(nv);
      const auto c = fem::assemble_convection(v, truth.mesh(), truth.layout());
      Vector r = s * zz;
      r.head(nv) += c.second_slot * v + cu;
      return masked(r, constrained);
    };
    Vector r = state_residual(z);
    const double tol = settings.newton_tol * std::max(1.0, state_residual(lift).norm());
    std::vector<double> hist{r.norm()};
    int it = 0;
    while (r.norm() > tol) {
      if (it++ >= settings.newton_max_iter)
        throw NonConvergence("forward Navier-Stokes solve did not converge at mu = " + mu.str(),
                             hist);
      const auto c = fem::assemble_convection(z.head(nv), truth.mesh(), truth.layout());
      SparseMatrix vv = a;
      vv += c.second_slot;
      vv += c.first_slot;
      const SparseMatrix jac = stokes_block(vv);
      const Vector dz =
          linalg::SparseLu(linalg::eliminate_symmetric(jac, constrained)).solve(Vector(-r));
      double step = 1.0;
      const double rn = r.norm();
      while (true) {
        const Vector trial = z + step * dz;
        Vector rt = state_residual(trial);
        if (std::isfinite(rt.norm()) && rt.norm() <= (1.0 - 1e-4 * step) * rn) {
          z = trial;
          r = std::move(rt);
          break;
        }
        step *= 0.5;
        if (step < std::ldexp(1.0, -10))
          throw LineSearchStagnation("forward Navier-Stokes line search stagnated at mu = " + mu.str(),
                                     hist);
      }
      hist.push_back(r.norm());
    }
    sol.diagnostics.residual_history = hist;
    sol.diagnostics.newton_iterations = it;
    sol.x.segment(sz.offset(Var::V), nv) = z.head(nv);
    sol.x.segment(sz.offset(Var::P), np) = z.tail(np);
  }
  sol.cost = truth.cost(mu, sol.x);
  sol.diagnostics.seconds = seconds_since(start);
  return sol;
}

double evaluate_cost(const TruthProblem& truth, const OcpSolution& sol) {
  return truth.cost(sol.mu, sol.x);
}

}  // namespace podocp::ocp
