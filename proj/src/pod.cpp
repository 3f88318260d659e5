#include "podocp/pod.hpp"

#include "podocp/linalg.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace podocp::pod {

namespace {

constexpr double kZeroSingularValue = 1e-12;
constexpr double kDependentColumn = 1e-8;

void fix_sign(Eigen::Ref<Vector> col) {
  Eigen::Index i = 0;
  col.cwiseAbs().maxCoeff(&i);
  if (col[i] < 0) col = -col;
}

/// Incremental X-orthonormal basis.
class OrthoBuilder {
 public:
  OrthoBuilder(const InnerProduct& ip, int capacity)
      : ip_(ip), basis_(ip.size(), capacity), xbasis_(ip.size(), capacity) {}

  /// Returns false when the column is numerically dependent.
  bool add(const Vector& c) {
    const double n0 = ip_.norm(c);
    if (!(n0 > 0.0)) return false;
    Vector v = c;
    for (int pass = 0; pass < 2 && count_ > 0; ++pass) {
      const Vector coef = xbasis_.leftCols(count_).transpose() * v;
      v.noalias() -= basis_.leftCols(count_) * coef;
    }
    const double n1 = ip_.norm(v);
    if (!(n1 > kDependentColumn * n0)) return false;
    v /= n1;
    if (count_ == basis_.cols()) {
      basis_.conservativeResize(Eigen::NoChange, 2 * count_ + 1);
      xbasis_.conservativeResize(Eigen::NoChange, 2 * count_ + 1);
    }
    basis_.col(count_) = v;
    xbasis_.col(count_) = ip_.apply(v);
    ++count_;
    return true;
  }

  Matrix result() const { return basis_.leftCols(count_); }
  int count() const { return count_; }

 private:
  const InnerProduct& ip_;
  Matrix basis_, xbasis_;
  int count_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Training set and snapshots
// ---------------------------------------------------------------------------

std::vector<ParameterPoint> sample_training_set(ProblemId problem, const ParameterBox& box,
                                                int size, std::uint64_t seed) {
  if (size < 1) throw InvalidArgument("training set size must be at least 1");
  if (box.dimension() != parameter_count(problem))
    throw InvalidArgument("parameter box dimension does not match the problem");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ParameterPoint> out;
  out.reserve(size);
  for (int i = 0; i < size; ++i) {
    std::vector<double> v;
    for (const auto& [lo, hi] : box.bounds) v.push_back(lo + (hi - lo) * unit(rng));
    out.emplace_back(problem, std::move(v));
  }
  return out;
}

SnapshotSet collect_snapshots(const ocp::TruthProblem& truth,
                              const std::vector<ParameterPoint>& parameters, int jobs) {
  if (parameters.empty()) throw InvalidArgument("collect_snapshots: empty training set");
  const int m = static_cast<int>(parameters.size());
  std::vector<std::optional<ocp::OcpSolution>> solutions(m);
  std::vector<std::string> errors(m);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < m; i = next++) {
      try {
        solutions[i] = ocp::solve_ocp(truth, parameters[i]);
      } catch (const SolverFailure& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n_threads = std::clamp(jobs, 1, m);
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SnapshotSet set;
  set.problem = truth.problem();
  set.sizes = truth.sizes();
  int ok = 0;
  for (int i = 0; i < m; ++i) ok += solutions[i].has_value();
  for (int k = 0; k < ocp::kVarCount; ++k)
    set.columns[k].resize(set.sizes.size(static_cast<Var>(k)) * set.sizes.nt, ok);
  int col = 0;
  for (int i = 0; i < m; ++i) {
    if (!solutions[i]) {
      std::ostringstream os;
      os << "snapshot at mu = " << parameters[i].str() << " excluded: " << errors[i];
      warn(os.str());
      set.failures.push_back(parameters[i].str() + ": " + errors[i]);
      continue;
    }
    const auto& sol = *solutions[i];
    const Vector lift = truth.lift_vector(ocp::theta(parameters[i], truth.settings()));
    ocp::OcpSolution homogeneous = sol;
    homogeneous.x -= lift;
    for (int k = 0; k < ocp::kVarCount; ++k)
      set.columns[k].col(col) = homogeneous.trajectory(static_cast<Var>(k));
    set.parameters.push_back(parameters[i]);
    set.cost.push_back(sol.cost);
    set.truth_seconds.push_back(sol.diagnostics.seconds);
    ++col;
  }
  return set;
}

// ---------------------------------------------------------------------------
// Inner products
// ---------------------------------------------------------------------------

InnerProduct::InnerProduct(SparseMatrix x, int blocks) : x_(std::move(x)), blocks_(blocks) {
  if (blocks < 1) throw InvalidArgument("inner product needs at least one block");
  x_.makeCompressed();
  auto chol = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(x_);
  if (chol->info() != Eigen::Success) throw SolverFailure("inner-product matrix is not positive definite");
  chol_ = chol;
}

Matrix InnerProduct::apply(const Matrix& a) const {
  if (a.rows() != size()) throw InvalidArgument("inner product: dimension mismatch");
  const int n = block_size();
  Matrix out(a.rows(), a.cols());
  for (int b = 0; b < blocks_; ++b) out.middleRows(b * n, n) = x_ * a.middleRows(b * n, n);
  return out;
}

double InnerProduct::dot(const Vector& a, const Vector& b) const {
  if (a.size() != size() || b.size() != size())
    throw InvalidArgument("inner product: dimension mismatch");
  const int n = block_size();
  double s = 0.0;
  for (int k = 0; k < blocks_; ++k) s += a.segment(k * n, n).dot(x_ * b.segment(k * n, n));
  return s;
}

Matrix InnerProduct::gram(const Matrix& a, const Matrix& b) const { return a.transpose() * apply(b); }

Matrix InnerProduct::weighted(const Matrix& a) const {
  if (a.rows() != size()) throw InvalidArgument("inner product: dimension mismatch");
  const int n = block_size();
  Matrix out(a.rows(), a.cols());
  for (int b = 0; b < blocks_; ++b) {
    const Matrix pa = chol_->permutationP() * a.middleRows(b * n, n);
    out.middleRows(b * n, n) = chol_->matrixU() * pa;
  }
  return out;
}

InnerProduct inner_product_for(const ocp::TruthProblem& truth, Var var) {
  const int nt = truth.sizes().nt;
  switch (var) {
    case Var::V:
    case Var::W: return InnerProduct(truth.velocity_product(), nt);
    case Var::P:
    case Var::Q: return InnerProduct(truth.pressure_product(), nt);
    case Var::U: return InnerProduct(truth.control_product(), nt);
  }
  throw InvalidArgument("unknown variable");
}

// ---------------------------------------------------------------------------
// POD
// ---------------------------------------------------------------------------

double PodResult::retained_energy(int n) const {
  const double total = eigenvalues.sum();
  if (!(total > 0.0)) return 1.0;
  return eigenvalues.head(std::min<int>(n, eigenvalues.size())).sum() / total;
}

PodResult pod(const Matrix& snapshots, const InnerProduct& ip, double eps_tol, int n_max) {
  if (snapshots.cols() < 1) throw InvalidArgument("pod: no snapshots");
  if (!(eps_tol > 0.0 && eps_tol < 1.0)) throw InvalidArgument("pod: eps_tol must lie in (0, 1)");
  if (n_max < 1) throw InvalidArgument("pod: n_max must be positive");
  const int m = static_cast<int>(snapshots.cols());
  PodResult out;
  out.eigenvalues = Vector::Zero(m);

  const Matrix y = ip.weighted(snapshots);
  Matrix core;
  if (y.rows() >= m) {
    const Eigen::HouseholderQR<Matrix> qr(y);
    core = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  } else {
    core = y;
  }
  const Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeFullV);
  const Vector sigma = svd.singularValues();
  const Matrix& rho = svd.matrixV();
  if (sigma.size() == 0 || !(sigma[0] > 0.0)) {
    warn("pod: all snapshots are zero; the basis is empty");
    out.modes.resize(snapshots.rows(), 0);
    return out;
  }

  int positive = 0;
  for (int k = 0; k < sigma.size(); ++k) {
    if (sigma[k] > kZeroSingularValue * sigma[0]) {
      out.eigenvalues[k] = sigma[k] * sigma[k] / m;
      ++positive;
    }
  }
  const double total = out.eigenvalues.sum();
  int needed = positive;
  double acc = 0.0;
  for (int k = 0; k < positive; ++k) {
    acc += out.eigenvalues[k];
    if (acc >= (1.0 - eps_tol) * total) {
      needed = k + 1;
      break;
    }
  }
  out.retained = std::min({needed, n_max, positive});

  const int available = std::min(n_max, positive);
  OrthoBuilder builder(ip, available);
  for (int k = 0; k < available; ++k) {
    const Vector mode = snapshots * rho.col(k) / sigma[k];
    if (!builder.add(mode)) {
      warn("pod: mode " + std::to_string(k + 1) + " is numerically dependent and was dropped");
    }
  }
  out.modes = builder.result();
  for (int k = 0; k < out.modes.cols(); ++k) fix_sign(out.modes.col(k));
  out.retained = std::min<int>(out.retained, out.modes.cols());
  return out;
}

// ---------------------------------------------------------------------------
// Supremizers and aggregation
// ---------------------------------------------------------------------------

Matrix compute_supremizers(const ocp::TruthProblem& truth, const Matrix& pressure_modes) {
  const auto& sz = truth.sizes();
  if (pressure_modes.rows() != sz.np * sz.nt && pressure_modes.rows() != sz.np)
    throw InvalidArgument("supremizers: pressure modes have wrong length");
  const int steps = static_cast<int>(pressure_modes.rows()) / sz.np;
  ocp::Theta reference{};
  reference.fill(1.0);
  const SparseMatrix d = truth.divergence(reference);
  const auto& layout = truth.layout();
  const SparseMatrix x = linalg::eliminate_symmetric(truth.velocity_product(), layout.dirichlet_mask);
  const Eigen::SimplicialLDLT<SparseMatrix> solver(x);
  if (solver.info() != Eigen::Success) throw SolverFailure("supremizers: velocity inner product is singular");
  Matrix out(sz.nv * steps, pressure_modes.cols());
  for (int k = 0; k < pressure_modes.cols(); ++k) {
    for (int n = 0; n < steps; ++n) {
      Vector rhs = d.transpose() * pressure_modes.col(k).segment(n * sz.np, sz.np);
      for (int i : layout.dirichlet_dofs) rhs[i] = 0.0;
      out.col(k).segment(n * sz.nv, sz.nv) = solver.solve(rhs);
    }
  }
  return out;
}

InitialBasis build_initial_basis(const ocp::TruthProblem& truth, const std::vector<ParameterPoint>& parameters,
                                 int n_max) {
  InitialBasis out;
  if (truth.problem() != ProblemId::StokesTD || truth.settings().initial_state == InitialState::Zero ||
      parameters.empty())
    return out;
  const int nv = truth.layout().n_velocity(), np = truth.layout().n_pressure();
  Matrix v(nv, parameters.size()), p(np, parameters.size());
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    const Vector flow = truth.unit_steady_flow(ocp::theta(parameters[i], truth.settings()));
    v.col(i) = flow.head(nv);
    p.col(i) = flow.tail(np);
  }
  const InnerProduct xv(truth.velocity_product(), 1);
  const InnerProduct xp(truth.pressure_product(), 1);
  const PodResult pv = pod(v, xv, 0.5, n_max);
  const PodResult pp = pod(p, xp, 0.5, n_max);
  out.pressure = pp.modes;
  const Matrix sup = compute_supremizers(truth, out.pressure);
  OrthoBuilder builder(xv, pv.modes.cols() + sup.cols());
  for (int k = 0; k < pv.modes.cols(); ++k) builder.add(pv.modes.col(k));
  for (int k = 0; k < sup.cols(); ++k) builder.add(sup.col(k));
  out.velocity = builder.result();
  return out;
}

int BasisSpace::prefix(int n) const {
  int k = 0;
  while (k < size() && level[k] < n) ++k;
  return k;
}

ReducedBasis ReducedBasis::truncated(int new_n) const {
  if (new_n < 0 || new_n > n) throw InvalidArgument("truncated: N outside [0, " + std::to_string(n) + "]");
  auto cut = [&](const BasisSpace& s) {
    BasisSpace t;
    const int k = s.prefix(new_n);
    t.columns = s.columns.leftCols(k);
    t.level.assign(s.level.begin(), s.level.begin() + k);
    t.group.assign(s.group.begin(), s.group.begin() + k);
    return t;
  };
  ReducedBasis out;
  out.velocity = cut(velocity);
  out.pressure = cut(pressure);
  out.control = cut(control);
  out.initial = initial;
  out.n = new_n;
  out.supremizers = supremizers;
  return out;
}

ReducedBasis aggregate(const AggregateInput& in, const InnerProduct& velocity,
                       const InnerProduct& pressure, const InnerProduct& control,
                       bool with_supremizers) {
  struct Source {
    const Matrix* m;
    BasisGroup group;
  };
  auto build = [](const InnerProduct& ip, const std::vector<Source>& sources, const char* name) {
    int levels = 0, total = 0;
    for (const auto& s : sources) {
      levels = std::max<int>(levels, s.m->cols());
      total += s.m->cols();
      if (s.m->cols() > 0 && s.m->rows() != ip.size())
        throw InvalidArgument(std::string("aggregate: ") + name + " columns have wrong length");
    }
    BasisSpace space;
    OrthoBuilder builder(ip, total);
    int dropped = 0;
    for (int lv = 0; lv < levels; ++lv) {
      for (const auto& s : sources) {
        if (lv >= s.m->cols()) continue;
        if (builder.add(s.m->col(lv))) {
          space.level.push_back(lv);
          space.group.push_back(s.group);
        } else {
          ++dropped;
        }
      }
    }
    space.columns = builder.result();
    for (int k = 0; k < space.columns.cols(); ++k) fix_sign(space.columns.col(k));
    if (dropped > 0) {
      std::ostringstream os;
      os << "aggregate: dropped " << dropped << " dependent " << name << " column(s); dimension "
         << space.size() << " instead of " << total;
      warn(os.str());
    }
    return std::pair{space, levels};
  };

  std::vector<Source> vel{{&in.state_velocity, BasisGroup::State},
                          {&in.adjoint_velocity, BasisGroup::Adjoint}};
  if (with_supremizers) {
    vel.push_back({&in.state_supremizers, BasisGroup::StateSupremizer});
    vel.push_back({&in.adjoint_supremizers, BasisGroup::AdjointSupremizer});
  }
  auto [v, nv] = build(velocity, vel, "velocity");
  auto [p, np] = build(pressure,
                       {{&in.state_pressure, BasisGroup::State}, {&in.adjoint_pressure, BasisGroup::Adjoint}},
                       "pressure");
  auto [u, nu] = build(control, {{&in.control, BasisGroup::State}}, "control");

  ReducedBasis out;
  out.velocity = std::move(v);
  out.pressure = std::move(p);
  out.control = std::move(u);
  out.n = std::max({nv, np, nu});
  out.supremizers = with_supremizers;
  return out;
}

OfflineResult build_reduced_basis(const ocp::TruthProblem& truth, const SnapshotSet& snapshots,
                                  double eps_tol, int n_max, bool with_supremizers) {
  if (snapshots.count() < 1) throw InvalidArgument("build_reduced_basis: no snapshots");
  const InnerProduct xv = inner_product_for(truth, Var::V);
  const InnerProduct xp = inner_product_for(truth, Var::P);
  const InnerProduct xu = inner_product_for(truth, Var::U);
  OfflineResult out;
  int n = 0;
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const Var var = static_cast<Var>(k);
    const InnerProduct& ip = (var == Var::V || var == Var::W) ? xv : (var == Var::U ? xu : xp);
    out.spectra[k] = pod(snapshots.of(var), ip, eps_tol, n_max);
    n = std::max(n, out.spectra[k].retained);
  }
  n = std::min(n, n_max);
  auto modes = [&](Var var) -> Matrix {
    const Matrix& m = out.spectra[static_cast<int>(var)].modes;
    return m.leftCols(std::min<int>(n, m.cols()));
  };
  AggregateInput in;
  in.state_velocity = modes(Var::V);
  in.adjoint_velocity = modes(Var::W);
  in.state_pressure = modes(Var::P);
  in.adjoint_pressure = modes(Var::Q);
  in.control = modes(Var::U);
  if (with_supremizers) {
    in.state_supremizers = compute_supremizers(truth, in.state_pressure);
    in.adjoint_supremizers = compute_supremizers(truth, in.adjoint_pressure);
  }
  out.basis = aggregate(in, xv, xp, xu, with_supremizers);
  out.basis.n = n;
  out.basis.initial = build_initial_basis(truth, snapshots.parameters, n_max);
  return out;
}

}  // namespace podocp::pod
