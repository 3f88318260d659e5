#include "podocp/rom.hpp"

#include "podocp/linalg.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace podocp::rom {

namespace {

using Clock = std::chrono::steady_clock;

int coupled_step(int n, ocp::TimeCoupling c) {
  return c == ocp::TimeCoupling::Same ? n : c == ocp::TimeCoupling::Previous ? n - 1 : n + 1;
}

const Matrix& basis_of(const pod::ReducedBasis& b, Var var) {
  switch (var) {
    case Var::V:
    case Var::W: return b.velocity.columns;
    case Var::P:
    case Var::Q: return b.pressure.columns;
    case Var::U: return b.control.columns;
  }
  throw InvalidArgument("unknown variable");
}

/// Rows of step n of a space-time basis.
auto step_rows(const Matrix& basis, int n, int block) { return basis.middleRows(n * block, block); }

std::vector<int> keep_indices(const OnlineModel& m, int nv, int np, int nu) {
  std::vector<int> idx;
  auto add = [&](Var var, int keep) {
    for (int i = 0; i < keep; ++i) idx.push_back(m.offset(var) + i);
  };
  add(Var::V, nv);
  add(Var::P, np);
  add(Var::U, nu);
  add(Var::W, nv);
  add(Var::Q, np);
  return idx;
}

std::string block_of_index(const OnlineModel& m, int i) {
  for (int k = ocp::kVarCount - 1; k >= 0; --k) {
    const Var var = static_cast<Var>(k);
    if (m.size(var) > 0 && i >= m.offset(var)) return std::string(ocp::to_string(var));
  }
  return "?";
}

}  // namespace

int OnlineModel::offset(Var var) const {
  switch (var) {
    case Var::V: return 0;
    case Var::P: return nv;
    case Var::U: return nv + np;
    case Var::W: return nv + np + nu;
    case Var::Q: return 2 * nv + np + nu;
  }
  return 0;
}

int OnlineModel::size(Var var) const {
  switch (var) {
    case Var::V:
    case Var::W: return nv;
    case Var::P:
    case Var::Q: return np;
    case Var::U: return nu;
  }
  return 0;
}

Matrix OnlineModel::assemble(const Theta& th) const {
  Matrix a = Matrix::Zero(dimension(), dimension());
  for (int q = 0; q < ocp::kThetaCount; ++q)
    if (operators[q].size() && th[q] != 0.0) a.noalias() += th[q] * operators[q];
  return a;
}

Vector OnlineModel::rhs(const Theta& th) const {
  Vector b = th[static_cast<int>(ocp::ThetaId::Target)] * target;
  const double l = th[static_cast<int>(ocp::ThetaId::Lift)];
  for (int q = 0; q < ocp::kThetaCount; ++q)
    if (lift[q].size() && th[q] != 0.0) b.noalias() -= l * th[q] * lift[q];
  if (has_start() && l != 0.0) {
    const Vector s = start_coefficients(th).head(start_nv);
    for (int q = 0; q < ocp::kThetaCount; ++q)
      if (start_coupling[q].size() && th[q] != 0.0)
        b.noalias() += l * th[q] * (start_lift_coupling[q] + start_coupling[q] * s);
  }
  return b;
}

Vector OnlineModel::start_coefficients(const Theta& th) const {
  const int n = start_nv + start_np;
  Matrix a = Matrix::Zero(n, n);
  Vector b = Vector::Zero(n);
  for (int q = 0; q < ocp::kThetaCount; ++q) {
    if (start_operators[q].size()) a.noalias() += th[q] * start_operators[q];
    if (start_lift[q].size()) b.noalias() -= th[q] * start_lift[q];
  }
  try {
    return linalg::solve_symmetric_indefinite(a, b);
  } catch (const linalg::SingularMatrix& e) {
    throw SolverFailure(std::string("reduced steady start is singular: ") + e.what());
  }
}

OnlineModel OnlineModel::restricted(int nv_keep, int np_keep, int nu_keep) const {
  if (nv_keep > nv || np_keep > np || nu_keep > nu || nv_keep < 0 || np_keep < 0 || nu_keep < 0)
    throw InvalidArgument("restricted: requested sizes exceed the model");
  const std::vector<int> idx = keep_indices(*this, nv_keep, np_keep, nu_keep);
  OnlineModel out;
  out.settings = settings;
  out.nv = nv_keep;
  out.np = np_keep;
  out.nu = nu_keep;
  for (int q = 0; q < ocp::kThetaCount; ++q) {
    if (operators[q].size()) out.operators[q] = operators[q](idx, idx);
    if (lift[q].size()) out.lift[q] = lift[q](idx);
  }
  out.target = target(idx);
  out.start_nv = start_nv;
  out.start_np = start_np;
  out.start_operators = start_operators;
  out.start_lift = start_lift;
  for (int q = 0; q < ocp::kThetaCount; ++q) {
    if (start_coupling[q].size()) out.start_coupling[q] = start_coupling[q](idx, Eigen::all);
    if (start_lift_coupling[q].size()) out.start_lift_coupling[q] = start_lift_coupling[q](idx);
  }
  out.s_ll = s_ll;
  out.s_lt = s_lt;
  out.s_tt = s_tt;
  out.obs_lift = obs_lift.head(nv_keep);
  out.obs_target = obs_target.head(nv_keep);
  out.obs_mass = obs_mass.topLeftCorner(nv_keep, nv_keep);
  out.control_penalty = control_penalty.topLeftCorner(nu_keep, nu_keep);
  if (!tensor.empty()) {
    for (int i = 0; i < nv_keep; ++i) out.tensor.push_back(tensor[i].topLeftCorner(nv_keep, nv_keep));
    out.lift_first = lift_first.topLeftCorner(nv_keep, nv_keep);
    out.lift_second = lift_second.topLeftCorner(nv_keep, nv_keep);
    out.lift_lift = lift_lift.head(nv_keep);
  }
  return out;
}

ReducedModel ReducedModel::truncated(int n) const {
  ReducedModel out;
  out.problem = problem;
  out.sizes = sizes;
  out.basis = basis.truncated(n);
  out.unit_lift = unit_lift;
  out.online = online.restricted(out.basis.velocity.size(), out.basis.pressure.size(),
                                 out.basis.control.size());
  return out;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

ReducedModel project(const ocp::TruthProblem& truth, const pod::ReducedBasis& basis) {
  const auto& sz = truth.sizes();
  if (basis.velocity.columns.rows() != sz.nv * sz.nt || basis.pressure.columns.rows() != sz.np * sz.nt ||
      basis.control.columns.rows() != sz.nu * sz.nt)
    throw InvalidArgument("project: basis does not match the truth layout");

  ReducedModel model;
  model.problem = truth.problem();
  model.sizes = sz;
  model.basis = basis;
  model.unit_lift = truth.unit_lift();
  OnlineModel& on = model.online;
  on.settings = truth.settings();
  on.nv = basis.velocity.size();
  on.np = basis.pressure.size();
  on.nu = basis.control.size();
  const int dim = on.dimension();
  const Vector& lift = truth.unit_lift();

  for (const auto& term : truth.affine().terms) {
    const int q = static_cast<int>(term.theta);
    if (!on.operators[q].size()) on.operators[q] = Matrix::Zero(dim, dim);
    if (!on.lift[q].size()) on.lift[q] = Vector::Zero(dim);
    const Matrix& br = basis_of(basis, term.row);
    const Matrix& bc = basis_of(basis, term.col);
    const int rb = sz.size(term.row), cb = sz.size(term.col);
    auto block = on.operators[q].block(on.offset(term.row), on.offset(term.col), br.cols(), bc.cols());
    auto lift_block = on.lift[q].segment(on.offset(term.row), br.cols());
    const SparseMatrix a = term.transposed ? SparseMatrix(term.matrix->transpose()) : *term.matrix;
    Vector a_lift;
    if (term.col == Var::V) a_lift = a * lift;
    for (int n = 0; n < sz.nt; ++n) {
      const int m = coupled_step(n, term.coupling);
      if (m < 0 || m >= sz.nt) continue;
      const Matrix ab = a * step_rows(bc, m, cb);
      block.noalias() += term.scale * step_rows(br, n, rb).transpose() * ab;
      if (term.col == Var::V) lift_block.noalias() += term.scale * step_rows(br, n, rb).transpose() * a_lift;
    }
  }
  on.target = Vector::Zero(dim);
  for (const auto& r : truth.affine().rhs) {
    if (r.theta != ocp::ThetaId::Target) throw InvalidArgument("project: unsupported right-hand side term");
    const Matrix& br = basis_of(basis, r.row);
    const int rb = sz.size(r.row);
    for (int n = 0; n < sz.nt; ++n)
      on.target.segment(on.offset(r.row), br.cols()).noalias() +=
          r.scale * step_rows(br, n, rb).transpose() * *r.vector;
  }

  const auto& init = basis.initial;
  if (!init.empty()) {
    const int kv = init.velocity.cols(), kp = init.pressure.cols();
    on.start_nv = kv;
    on.start_np = kp;
    auto slot = [&](int q) {
      if (!on.start_operators[q].size()) {
        on.start_operators[q] = Matrix::Zero(kv + kp, kv + kp);
        on.start_lift[q] = Vector::Zero(kv + kp);
      }
    };
    for (const auto& piece : truth.viscous_pieces()) {
      const int q = static_cast<int>(piece.theta);
      slot(q);
      on.start_operators[q].topLeftCorner(kv, kv) += init.velocity.transpose() * (*piece.matrix * init.velocity);
      on.start_lift[q].head(kv) += init.velocity.transpose() * (*piece.matrix * lift);
    }
    for (const auto& piece : truth.divergence_pieces()) {
      const int q = static_cast<int>(piece.theta);
      slot(q);
      const Matrix b = init.pressure.transpose() * (*piece.matrix * init.velocity);
      on.start_operators[q].bottomLeftCorner(kp, kv) += b;
      on.start_operators[q].topRightCorner(kv, kp) += b.transpose();
      on.start_lift[q].tail(kp) += init.pressure.transpose() * (*piece.matrix * lift);
    }
    const auto w0 = step_rows(basis.velocity.columns, 0, sz.nv);
    for (const auto& piece : truth.mass_pieces()) {
      const int q = static_cast<int>(piece.theta);
      on.start_coupling[q] = Matrix::Zero(dim, kv);
      on.start_lift_coupling[q] = Vector::Zero(dim);
      on.start_coupling[q].middleRows(on.offset(Var::W), on.nv) = w0.transpose() * (*piece.matrix * init.velocity);
      on.start_lift_coupling[q].segment(on.offset(Var::W), on.nv) = w0.transpose() * (*piece.matrix * lift);
    }
  }

  // Cost.
  const double dt = truth.settings().time_step();
  const SparseMatrix& mo = truth.observation_mass();
  const Vector& t = truth.unit_target();
  const Vector mo_l = mo * lift, mo_t = mo * t;
  on.s_ll = sz.nt * dt * lift.dot(mo_l);
  on.s_lt = sz.nt * dt * lift.dot(mo_t);
  on.s_tt = sz.nt * dt * t.dot(mo_t);
  const Matrix& phi_v = basis.velocity.columns;
  const Matrix& phi_u = basis.control.columns;
  on.obs_lift = Vector::Zero(on.nv);
  on.obs_target = Vector::Zero(on.nv);
  on.obs_mass = Matrix::Zero(on.nv, on.nv);
  on.control_penalty = Matrix::Zero(on.nu, on.nu);
  for (int n = 0; n < sz.nt; ++n) {
    const auto pv = step_rows(phi_v, n, sz.nv);
    const auto pu = step_rows(phi_u, n, sz.nu);
    on.obs_lift.noalias() += dt * pv.transpose() * mo_l;
    on.obs_target.noalias() += dt * pv.transpose() * mo_t;
    on.obs_mass.noalias() += dt * pv.transpose() * (mo * pv);
    on.control_penalty.noalias() += dt * pu.transpose() * (truth.control_penalty() * pu);
  }

  if (truth.problem() == ProblemId::NsSteady) {
    const auto& mesh = truth.mesh();
    const auto& layout = truth.layout();
    on.tensor.resize(on.nv);
    for (int i = 0; i < on.nv; ++i) {
      const auto c = fem::assemble_convection(phi_v.col(i), mesh, layout);
      on.tensor[i] = (phi_v.transpose() * (c.second_slot * phi_v)).transpose();
    }
    const auto cl = fem::assemble_convection(lift, mesh, layout);
    on.lift_first = (phi_v.transpose() * (cl.second_slot * phi_v)).transpose();
    on.lift_second = (phi_v.transpose() * (cl.first_slot * phi_v)).transpose();
    on.lift_lift = phi_v.transpose() * (cl.second_slot * lift);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Online
// ---------------------------------------------------------------------------

namespace {

struct Convection {
  Vector v_row, w_row;
  Matrix vv, wv;
};

/// Reduced convection terms and their derivatives at coefficients a (state)
/// and b (adjoint), lift amplitude l.
Convection reduced_convection(const OnlineModel& m, double l, const Vector& a, const Vector& b,
                              bool with_jacobian) {
  const int n = m.nv;
  const Matrix g = m.lift_first + m.lift_second;
  Matrix ta = Matrix::Zero(n, n);  // sum_i a_i T_i
  Matrix wm(n, n);                 // row k: (T_k b)^T
  for (int i = 0; i < n; ++i) {
    ta.noalias() += a[i] * m.tensor[i];
    wm.row(i) = (m.tensor[i] * b).transpose();
  }
  Convection out;
  out.w_row = l * l * m.lift_lift + l * (g.transpose() * a) + ta.transpose() * a;
  out.v_row = l * (g * b) + wm * a + wm.transpose() * a;
  if (with_jacobian) {
    Matrix u(n, n);  // column j: T_j^T a
    for (int j = 0; j < n; ++j) u.col(j) = m.tensor[j].transpose() * a;
    out.wv = l * g.transpose() + ta.transpose() + u;
    out.vv = wm + wm.transpose();
  }
  return out;
}

}  // namespace

Vector reduced_residual(const OnlineModel& m, const Theta& th, const Vector& c) {
  if (c.size() != m.dimension()) throw InvalidArgument("reduced residual: wrong coefficient length");
  Vector r = m.assemble(th) * c - m.rhs(th);
  if (!m.tensor.empty()) {
    const double l = th[static_cast<int>(ocp::ThetaId::Lift)];
    const auto conv = reduced_convection(m, l, c.segment(m.offset(Var::V), m.nv),
                                         c.segment(m.offset(Var::W), m.nv), false);
    r.segment(m.offset(Var::V), m.nv) += conv.v_row;
    r.segment(m.offset(Var::W), m.nv) += conv.w_row;
  }
  return r;
}

Matrix reduced_jacobian(const OnlineModel& m, const Theta& th, const Vector& c) {
  if (c.size() != m.dimension()) throw InvalidArgument("reduced Jacobian: wrong coefficient length");
  Matrix j = m.assemble(th);
  if (!m.tensor.empty()) {
    const double l = th[static_cast<int>(ocp::ThetaId::Lift)];
    const auto conv = reduced_convection(m, l, c.segment(m.offset(Var::V), m.nv),
                                         c.segment(m.offset(Var::W), m.nv), true);
    const int v = m.offset(Var::V), w = m.offset(Var::W);
    j.block(v, v, m.nv, m.nv) += conv.vv;
    j.block(w, v, m.nv, m.nv) += conv.wv;
    j.block(v, w, m.nv, m.nv) += conv.wv.transpose();
  }
  return j;
}

double reduced_cost(const OnlineModel& m, const Theta& th, const Vector& c) {
  const double l = th[static_cast<int>(ocp::ThetaId::Lift)];
  const double t = th[static_cast<int>(ocp::ThetaId::Target)];
  const auto a = c.segment(m.offset(Var::V), m.nv);
  const auto u = c.segment(m.offset(Var::U), m.nu);
  return 0.5 * (l * l * m.s_ll - 2.0 * l * t * m.s_lt + t * t * m.s_tt) +
         a.dot(l * m.obs_lift - t * m.obs_target) + 0.5 * a.dot(m.obs_mass * a) +
         0.5 * u.dot(m.control_penalty * u);
}

ReducedSolution solve_reduced(const OnlineModel& m, const ParameterPoint& mu) {
  const auto start = Clock::now();
  if (mu.problem() != m.settings.problem) throw InvalidArgument("solve_reduced: parameter is for another problem");
  const Theta th = ocp::theta(mu, m.settings);
  ReducedSolution sol;

  auto dense_solve = [&](const Matrix& a, const Vector& b) {
    try {
      return linalg::solve_symmetric_indefinite(a, b);
    } catch (const linalg::SingularMatrix& e) {
      std::ostringstream os;
      os << "reduced system is singular";
      if (e.pivot() >= 0) os << " in the " << block_of_index(m, e.pivot()) << " block (index " << e.pivot() << ")";
      os << " at mu = " << mu.str() << ": " << e.what();
      throw SolverFailure(os.str());
    }
  };

  if (m.tensor.empty()) {
    const Matrix a = m.assemble(th);
    const Vector b = m.rhs(th);
    sol.coefficients = dense_solve(a, b);
    const double bn = b.norm();
    sol.residual = (a * sol.coefficients - b).norm() / (bn > 0.0 ? bn : 1.0);
  } else {
    const auto& s = m.settings;
    Vector c = Vector::Zero(m.dimension());
    Vector r = reduced_residual(m, th, c);
    const double tol = s.newton_tol * std::max(1.0, r.norm());
    std::vector<double> hist{r.norm()};
    int it = 0;
    while (r.norm() > tol) {
      if (it >= s.newton_max_iter)
        throw NonConvergence("reduced Newton did not converge at mu = " + mu.str(), hist);
      const Vector dc = dense_solve(reduced_jacobian(m, th, c), Vector(-r));
      const double rn = r.norm();
      double step = 1.0;
      while (true) {
        const Vector trial = c + step * dc;
        Vector rt = reduced_residual(m, th, trial);
        if (std::isfinite(rt.norm()) && rt.norm() <= (1.0 - 1e-4 * step) * rn) {
          c = trial;
          r = std::move(rt);
          break;
        }
        step *= 0.5;
        if (step < std::ldexp(1.0, -10))
          throw LineSearchStagnation("reduced line search stagnated at mu = " + mu.str(), hist);
      }
      ++it;
      hist.push_back(r.norm());
    }
    sol.coefficients = c;
    sol.residual = r.norm();
    sol.newton_iterations = it;
  }
  sol.cost = reduced_cost(m, th, sol.coefficients);
  sol.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return sol;
}

Vector reconstruct(const ReducedModel& model, const ParameterPoint& mu, const Vector& c) {
  const auto& on = model.online;
  if (c.size() != on.dimension()) throw InvalidArgument("reconstruct: wrong coefficient length");
  const auto& sz = model.sizes;
  const Theta th = ocp::theta(mu, on.settings);
  Vector x = Vector::Zero(sz.total());
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const Var var = static_cast<Var>(k);
    const Matrix& b = basis_of(model.basis, var);
    const int blk = sz.size(var);
    const Vector full = b * c.segment(on.offset(var), on.size(var));
    for (int n = 0; n < sz.nt; ++n) x.segment(sz.index(n, var, 0), blk) = full.segment(n * blk, blk);
  }
  const double l = th[static_cast<int>(ocp::ThetaId::Lift)];
  for (int n = 0; n < sz.nt; ++n) x.segment(sz.index(n, Var::V, 0), sz.nv) += l * model.unit_lift;
  return x;
}

Vector project_solution(const ReducedModel& model, const ocp::TruthProblem& truth,
                        const ocp::OcpSolution& sol) {
  const auto& on = model.online;
  ocp::OcpSolution hom = sol;
  hom.x -= truth.lift_vector(ocp::theta(sol.mu, truth.settings()));
  Vector c(on.dimension());
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const Var var = static_cast<Var>(k);
    const pod::InnerProduct ip = pod::inner_product_for(truth, var);
    c.segment(on.offset(var), on.size(var)) =
        basis_of(model.basis, var).transpose() * ip.apply(hom.trajectory(var));
  }
  return c;
}

std::array<double, ocp::kVarCount> relative_errors(const ocp::TruthProblem& truth, const Vector& approx,
                                                    const Vector& reference) {
  const auto& sz = truth.sizes();
  if (approx.size() != sz.total() || reference.size() != sz.total())
    throw InvalidArgument("relative_errors: vectors do not match the problem");
  std::array<double, ocp::kVarCount> out{};
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const Var var = static_cast<Var>(k);
    const SparseMatrix& x = var == Var::V || var == Var::W ? truth.velocity_product()
                            : var == Var::U                ? truth.control_product()
                                                           : truth.pressure_product();
    double num = 0.0, den = 0.0;
    for (int n = 0; n < sz.nt; ++n) {
      const auto r = reference.segment(sz.index(n, var, 0), sz.size(var));
      const Vector d = approx.segment(sz.index(n, var, 0), sz.size(var)) - r;
      num += d.dot(x * d);
      den += r.dot(x * r);
    }
    num = std::sqrt(std::max(0.0, num));
    den = std::sqrt(std::max(0.0, den));
    out[k] = den > 0.0 ? num / den : num;
  }
  return out;
}

}  // namespace podocp::rom
