// Acceptance checks. Prints one "AC<k> PASS|FAIL" line per criterion.
// Usage: acceptance [k ...]   (no argument runs all nine)

#include "podocp/bench.hpp"
#include "podocp/fem.hpp"
#include "podocp/linalg.hpp"
#include "podocp/ocp.hpp"
#include "podocp/pod.hpp"
#include "podocp/rom.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

using namespace podocp;
using ocp::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

struct Trained {
  ocp::TruthProblem truth;
  std::vector<ParameterPoint> training;
  pod::OfflineResult offline;
  rom::ReducedModel model;
};

Trained train(const ProblemSettings& s, double h, int training_size, double eps_tol, int n_max,
              bool supremizers = true, std::uint64_t seed = 1) {
  ocp::TruthProblem truth(geometry::build_bifurcation_mesh(h), s);
  auto training = pod::sample_training_set(s.problem, s.box, training_size, seed);
  const auto snaps = pod::collect_snapshots(truth, training, jobs());
  auto offline = pod::build_reduced_basis(truth, snaps, eps_tol, n_max, supremizers);
  auto model = rom::project(truth, offline.basis);
  return {std::move(truth), std::move(training), std::move(offline), std::move(model)};
}

/// stokes_td at desk scale: h = 0.25, Nt = 20, |Lambda| = 70, N up to 35.
Trained& stokes_desk() {
  static Trained t = train(ProblemSettings::defaults(ProblemId::StokesTD), 0.25, 70, 1e-12, 35);
  return t;
}

const std::array<const char*, ocp::kVarCount> kNames = {"v", "p", "u", "w", "q"};

// ---------------------------------------------------------------------------

Outcome ac1() {
  const auto s = ProblemSettings::defaults(ProblemId::NsSteady);
  ocp::TruthProblem truth(geometry::build_bifurcation_mesh(0.1), s);
  const auto training = pod::sample_training_set(ProblemId::NsSteady, s.box, 100, 1);
  const auto snaps = pod::collect_snapshots(truth, training, jobs());
  if (snaps.partial()) return {false, std::to_string(snaps.failures.size()) + " training solves failed"};
  bool ok = true;
  std::string detail = "energy of 10 modes:";
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const Var var = static_cast<Var>(k);
    const auto r = pod::pod(snaps.of(var), pod::inner_product_for(truth, var), 1e-3, 10);
    const double e = r.retained_energy(10);
    ok = ok && e >= 0.999;
    detail += std::string(" ") + kNames[k] + "=" + fmt(e);
  }
  return {ok, detail};
}

Outcome ac2() {
  auto& t = stokes_desk();
  const std::vector<int> n_list = {15, 20, 25, 30, 35};
  if (t.offline.basis.n < 35) return {false, "basis has only " + std::to_string(t.offline.basis.n) + " levels"};
  const auto test = pod::sample_training_set(ProblemId::StokesTD, t.truth.settings().box, 50, 2);
  const auto sweep = bench::error_sweep(t.truth, t.model, test, n_list, jobs());
  if (!sweep.failures.empty()) return {false, std::to_string(sweep.failures.size()) + " test solves failed"};
  bool ok = true;
  std::string detail;
  auto monotone = [&](auto get, const std::string& name) {
    std::string series;
    bool mono = true;
    for (std::size_t k = 0; k < sweep.rows.size(); ++k) {
      series += (k ? "/" : "") + fmt(get(sweep.rows[k]));
      if (k > 0 && get(sweep.rows[k]) > get(sweep.rows[k - 1])) mono = false;
    }
    if (!mono) detail += name + " not monotone (" + series + "); ";
    ok = ok && mono;
  };
  for (int v = 0; v < ocp::kVarCount; ++v)
    monotone([v](const bench::ErrorRow& r) { return r.mean_error[v]; }, kNames[v]);
  monotone([](const bench::ErrorRow& r) { return r.mean_cost_error; }, "J");
  const double gain = sweep.rows.front().mean_cost_error / sweep.rows.back().mean_cost_error;
  if (gain < 100.0) {
    ok = false;
    detail += "J error improves " + fmt(gain) + "x (need 100x)";
  }
  if (ok) detail = "all errors non-increasing, J error improves " + fmt(gain) + "x";
  return {ok, detail};
}

Outcome ac3() {
  auto& t = stokes_desk();
  const int dofs = t.truth.sizes().total();
  const auto sample = pod::sample_training_set(ProblemId::StokesTD, t.truth.settings().box, 5, 2);
  const auto s = bench::speedup_sweep(t.truth, t.model, sample, {15, 20, 25, 30, 35}, 5);
  bool ok = dofs >= 50000;
  std::string series;
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    series += (k ? "/" : "") + fmt(s.rows[k].speedup);
    ok = ok && s.rows[k].speedup >= 10.0;
    if (k > 0 && s.rows[k].speedup > s.rows[k - 1].speedup) ok = false;
  }
  return {ok, std::to_string(dofs) + " dofs, speedups " + series};
}

Outcome ac4() {
  bool ok = true;
  std::string detail;
  for (auto problem : {ProblemId::StokesTD, ProblemId::NsSteady}) {
    // No truncation: every positive POD mode is kept, and Newton runs to
    // round-off so the comparison measures the reduced space alone.
    auto s = ProblemSettings::defaults(problem);
    s.newton_tol = 1e-12;
    const auto t = train(s, 0.5, 5, std::numeric_limits<double>::min(), 5);
    double worst = 0.0;
    for (const auto& mu : t.training) {
      const auto truth_sol = ocp::solve_ocp(t.truth, mu);
      const auto red = rom::solve_reduced(t.model.online, mu);
      const auto err = rom::relative_errors(t.truth, rom::reconstruct(t.model, mu, red.coefficients), truth_sol.x);
      for (double e : err) worst = std::max(worst, e);
    }
    ok = ok && t.model.basis.n == 5 && worst <= 1e-8;
    detail += std::string(to_string(problem)) + " N=" + std::to_string(t.model.basis.n) + " max error " +
              fmt(worst) + "; ";
  }
  return {ok, detail};
}

Outcome ac5() {
  std::string detail;
  // (a) symmetry
  auto st = ProblemSettings::defaults(ProblemId::StokesTD);
  ocp::TruthProblem stokes(geometry::build_bifurcation_mesh(0.5), st);
  double asym = 0.0;
  for (const auto& mu : pod::sample_training_set(ProblemId::StokesTD, st.box, 3, 5))
    asym = std::max(asym, linalg::relative_asymmetry(ocp::assemble_kkt_stokes_td(stokes, mu).matrix));
  const bool a = asym <= 1e-10;
  detail += "(a) asymmetry " + fmt(asym);

  // (b) Jacobian against central differences
  const auto ns_settings = ProblemSettings::defaults(ProblemId::NsSteady);
  ocp::TruthProblem ns(geometry::build_bifurcation_mesh(0.5), ns_settings);
  const ParameterPoint mu_ns(ProblemId::NsSteady, {1.1});
  const Vector x = ocp::solve_ns_ocp(ns, mu_ns).x;
  const SparseMatrix jac = ns.jacobian(mu_ns, x);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  const double eps = 1e-6 * std::max(1.0, x.norm());
  for (int k = 0; k < 20; ++k) {
    Vector d(x.size());
    for (int i = 0; i < d.size(); ++i) d[i] = normal(rng);
    d.normalize();
    const Vector fd = (ns.residual(mu_ns, x + eps * d) - ns.residual(mu_ns, x - eps * d)) / (2.0 * eps);
    const Vector jd = jac * d;
    worst = std::max(worst, (fd - jd).norm() / jd.norm());
  }
  const bool b = worst <= 1e-5;
  detail += ", (b) Jacobian error " + fmt(worst);

  // (c) optimal cost against the uncontrolled cost
  int better = 0, total = 0;
  for (ocp::TruthProblem* p : {&stokes, &ns}) {
    for (const auto& mu : pod::sample_training_set(p->problem(), p->settings().box, 10, 9)) {
      const double j_opt = ocp::solve_ocp(*p, mu).cost;
      const double j_free = ocp::evaluate_cost(*p, ocp::solve_forward(*p, mu));
      better += j_opt <= j_free;
      ++total;
    }
  }
  const bool c = better == total;
  detail += ", (c) J_opt <= J(u=0) at " + std::to_string(better) + "/" + std::to_string(total);
  return {a && b && c, detail};
}

Outcome ac6() {
  using std::numbers::pi;
  const double nu = 1.0;
  auto exact_v = [](double x, double y) {
    return Eigen::Vector2d(pi * std::sin(pi * x) * std::cos(pi * y), -pi * std::cos(pi * x) * std::sin(pi * y));
  };
  auto exact_grad = [](double x, double y) {
    Eigen::Matrix2d g;
    g << pi * pi * std::cos(pi * x) * std::cos(pi * y), -pi * pi * std::sin(pi * x) * std::sin(pi * y),
        pi * pi * std::sin(pi * x) * std::sin(pi * y), -pi * pi * std::cos(pi * x) * std::cos(pi * y);
    return g;
  };
  auto exact_p = [](double x, double y) { return std::cos(pi * x) * std::cos(pi * y); };
  auto forcing = [&](double x, double y) {
    const Eigen::Vector2d grad_p(-pi * std::sin(pi * x) * std::cos(pi * y), -pi * std::cos(pi * x) * std::sin(pi * y));
    return Eigen::Vector2d(2.0 * nu * pi * pi * exact_v(x, y) + grad_p);
  };
  std::vector<double> ev, ep;
  for (int n : {8, 16, 32, 64}) {
    const auto mesh = geometry::build_rectangle_mesh(0, 1, 0, 1, n, n);
    const auto layout = fem::build_layout(mesh);
    const auto sol = fem::solve_dirichlet_stokes(mesh, layout, nu, forcing, exact_v);
    ev.push_back(fem::velocity_h1_seminorm_error(mesh, layout, sol.velocity, exact_grad));
    ep.push_back(fem::pressure_l2_error(mesh, layout, sol.pressure, exact_p));
  }
  double min_v = 1e300, min_p = 1e300;
  std::string detail = "orders v:";
  for (std::size_t k = 1; k < ev.size(); ++k) {
    const double ov = std::log2(ev[k - 1] / ev[k]), op = std::log2(ep[k - 1] / ep[k]);
    min_v = std::min(min_v, ov);
    min_p = std::min(min_p, op);
    detail += " " + fmt(ov);
  }
  detail += ", p:";
  for (std::size_t k = 1; k < ep.size(); ++k) detail += " " + fmt(std::log2(ep[k - 1] / ep[k]));
  return {min_v >= 1.9 && min_p >= 1.9, detail};
}

Outcome ac7() {
  const auto s = ProblemSettings::defaults(ProblemId::NsSteady);
  const auto with = train(s, 0.5, 10, 1e-12, 4, true);
  const auto without = train(s, 0.5, 10, 1e-12, 4, false);
  ocp::Theta one{};
  one.fill(1.0);
  const SparseMatrix d = with.truth.divergence(one);
  auto sigma_min = [&](const pod::ReducedBasis& b) {
    const Matrix coupling = b.pressure.columns.transpose() * (d * b.velocity.columns);
    return Eigen::JacobiSVD<Matrix>(coupling).singularValues().minCoeff();
  };
  const double s_with = sigma_min(with.offline.basis), s_without = sigma_min(without.offline.basis);
  const bool inf_sup = s_with >= 10.0 * s_without;
  std::string detail = "sigma_min " + fmt(s_with) + " vs " + fmt(s_without);

  double p_with = 0.0, p_without = 0.0;
  bool failed = false;
  for (double m : {0.75, 1.05, 1.35}) {
    const ParameterPoint mu(ProblemId::NsSteady, {m});
    const auto truth_sol = ocp::solve_ocp(with.truth, mu);
    auto pressure_error = [&](const Trained& t) {
      const auto red = rom::solve_reduced(t.model.online, mu);
      const auto e = rom::relative_errors(t.truth, rom::reconstruct(t.model, mu, red.coefficients), truth_sol.x);
      return std::max(e[static_cast<int>(Var::P)], e[static_cast<int>(Var::Q)]);
    };
    p_with = std::max(p_with, pressure_error(with));
    try {
      p_without = std::max(p_without, pressure_error(without));
    } catch (const SolverFailure&) {
      failed = true;
    }
  }
  const bool pressure = failed || p_without >= 10.0 * p_with;
  detail += failed ? ", solve without supremizers fails"
                   : ", pressure error " + fmt(p_with) + " vs " + fmt(p_without);
  return {inf_sup && pressure, detail};
}

Outcome ac8() {
  auto s = ProblemSettings::defaults(ProblemId::StokesTD);
  s.nt = 4;
  const auto t = train(s, 0.25, 5, 1e-8, 3);
  const auto& basis = t.model.basis;
  const auto& sz = t.truth.sizes();
  const auto& on = t.model.online;
  // Space-time basis matrix.
  Matrix phi = Matrix::Zero(sz.total(), on.dimension());
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const Var var = static_cast<Var>(k);
    const Matrix& b = var == Var::V || var == Var::W ? basis.velocity.columns
                      : var == Var::U               ? basis.control.columns
                                                    : basis.pressure.columns;
    const int block = sz.size(var);
    for (int n = 0; n < sz.nt; ++n)
      phi.block(sz.index(n, var, 0), on.offset(var), block, b.cols()) = b.middleRows(n * block, block);
  }
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(1.0, 2.0);
  double worst = 0.0;
  std::string values;
  for (int k = 0; k < 3; ++k) {
    const double mu2 = unit(rng);
    values += (k ? "/" : "") + fmt(mu2);
    const ParameterPoint mu(ProblemId::StokesTD, {0.4, mu2, 0.7});
    // The deformed problem sees its own geometry as reference: mu2 = 1.
    ocp::TruthProblem deformed(geometry::deform(t.truth.mesh(), geometry::stretch_map(mu2)), s);
    const ParameterPoint mu_ref(ProblemId::StokesTD, {0.4, 1.0, 0.7});
    const SparseMatrix direct = ocp::assemble_operator(deformed.affine(), ocp::theta(mu_ref, s));
    const Matrix ref = phi.transpose() * (direct * phi);
    const Matrix red = on.assemble(ocp::theta(mu, s));
    worst = std::max(worst, (red - ref).norm() / ref.norm());
  }
  return {worst <= 1e-10, "mu2 = " + values + ", max relative difference " + fmt(worst)};
}

Outcome ac9() {
  bool ok = true;
  std::string detail;
  for (auto problem : {ProblemId::StokesTD, ProblemId::NsSteady}) {
    auto s = ProblemSettings::defaults(problem);
    s.nt = 4;
    const auto t = train(s, 0.5, 6, 1e-12, 5);
    for (int n = 1; n <= t.model.basis.n; ++n) ok = ok && t.model.truncated(n).dimension() == 13 * n;
    ok = ok && t.model.basis.n == 5;
    detail += std::string(to_string(problem)) + " N=" + std::to_string(t.model.basis.n) + " dim=" +
              std::to_string(t.model.dimension()) + "; ";
  }
  detail += "no extra unknown, so 13N (not 13N+1)";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::array<Outcome (*)(), 9> checks = {ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a.starts_with("AC") || a.starts_with("ac")) a = a.substr(2);
    const int k = std::atoi(a.c_str());
    if (k < 1 || k > 9) {
      std::cerr << "usage: acceptance [1-9 ...]\n";
      return 2;
    }
    selected.insert(k);
  }
  if (selected.empty())
    for (int k = 1; k <= 9; ++k) selected.insert(k);
  set_warning_sink([](std::string_view) {});

  bool all = true;
  for (int k : selected) {
    Outcome o;
    try {
      o = checks[k - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "AC" << k << (o.pass ? " PASS " : " FAIL ") << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
