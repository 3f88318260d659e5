#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace podocp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised when a requested mesh size cannot resolve the geometric features.
class MeshResolutionError : public Error {
 public:
  using Error::Error;
};

class SolverFailure : public Error {
 public:
  using Error::Error;
};

/// Newton iteration ran out of iterations. Carries the residual history.
class NonConvergence : public SolverFailure {
 public:
  NonConvergence(const std::string& what, std::vector<double> history)
      : SolverFailure(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

/// Backtracking reached the minimum step without sufficient decrease.
class LineSearchStagnation : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

using WarningSink = std::function<void(std::string_view)>;

/// Emit a warning through the installed sink (stderr by default).
void warn(std::string_view message);

/// Replace the warning sink; returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

// ---------------------------------------------------------------------------
// Problems and parameters
// ---------------------------------------------------------------------------

enum class ProblemId { StokesTD, NsSteady };

std::string_view to_string(ProblemId problem);
ProblemId problem_from_string(std::string_view name);

/// Number of parameter components for a problem.
int parameter_count(ProblemId problem);

struct ParameterBox {
  std::vector<std::pair<double, double>> bounds;

  bool contains(const std::vector<double>& values) const;
  int dimension() const { return static_cast<int>(bounds.size()); }
};

/// Default box: stokes_td [0.01,1]x[1,2]x[0.01,1]; ns_steady [0.7,1.5].
ParameterBox default_box(ProblemId problem);

class ParameterPoint {
 public:
  ParameterPoint() = default;
  /// Throws InvalidArgument on an arity mismatch.
  ParameterPoint(ProblemId problem, std::vector<double> values);

  ProblemId problem() const { return problem_; }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_.at(i); }
  std::size_t size() const { return values_.size(); }

  bool inside(const ParameterBox& box) const { return box.contains(values_); }

  std::string str() const;

  friend bool operator==(const ParameterPoint&, const ParameterPoint&) = default;

 private:
  ProblemId problem_ = ProblemId::StokesTD;
  std::vector<double> values_;
};

/// Velocity at t = 0 for stokes_td: the steady Stokes flow with zero control
/// at the same parameter, or rest.
enum class InitialState { Steady, Zero };

std::string_view to_string(InitialState state);
InitialState initial_state_from_string(std::string_view name);

/// Physical and discretization constants of a benchmark. Values the
/// formulation leaves open (eta, alpha, initial state) are explicit here.
struct ProblemSettings {
  ProblemId problem = ProblemId::StokesTD;

  // stokes_td
  int nt = 20;
  double final_time = 1.0;
  double alpha1 = 1e-3;
  double alpha2 = 1e-4;
  InitialState initial_state = InitialState::Steady;

  // ns_steady
  double alpha = 1e-3;
  double eta = 1.0;
  double newton_tol = 1e-9;
  int newton_max_iter = 25;

  // Multipliers on the Dirichlet inflow and the observation target.
  double inflow_scale = 1.0;
  double target_scale = 1.0;

  ParameterBox box = default_box(ProblemId::StokesTD);

  static ProblemSettings defaults(ProblemId problem);

  int time_steps() const { return problem == ProblemId::StokesTD ? nt : 1; }
  double time_step() const {
    return problem == ProblemId::StokesTD ? final_time / nt : 1.0;
  }
  /// L2 weight and tangential-gradient weight of the control penalty.
  double control_weight() const {
    return problem == ProblemId::StokesTD ? alpha1 : alpha;
  }
  double control_gradient_weight() const {
    return problem == ProblemId::StokesTD ? alpha2 : 0.1 * alpha;
  }
};

}  // namespace podocp
