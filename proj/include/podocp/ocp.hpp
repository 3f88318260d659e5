#pragma once

#include "podocp/common.hpp"
#include "podocp/fem.hpp"
#include "podocp/geometry.hpp"

#include <array>
#include <memory>

/// Full-order optimality systems.
///
/// Unknowns per time step are ordered [v p u w q]; a space-time vector stores
/// step n (0-based, time (n + 1) dt) at offset n * step_size(). The steady
/// problem is the one-step case with dt = 1 and no time derivative.
///
/// Every operator is kept as a list of parameter-independent terms with a
/// scalar multiplier theta(mu), so the same description drives truth assembly
/// and reduced projection.
namespace podocp::ocp {

enum class Var : int { V = 0, P = 1, U = 2, W = 3, Q = 4 };
inline constexpr int kVarCount = 5;
std::string_view to_string(Var var);

enum class ThetaId : int {
  One = 0,
  Stretch,
  ViscosityXX,
  ViscosityYY,
  Viscosity,
  Target,
  Lift,
};
inline constexpr int kThetaCount = 7;
using Theta = std::array<double, kThetaCount>;

/// stokes_td: Stretch = mu2, ViscosityXX = mu1/mu2, ViscosityYY = mu1 mu2,
/// Viscosity = mu1, Target = mu3, Lift = 1.
/// ns_steady: Stretch = 1, all viscosities = eta, Target = Lift = mu1.
/// Target and Lift are further multiplied by the settings' scales.
Theta theta(const ParameterPoint& mu, const ProblemSettings& settings);

enum class TimeCoupling { Same, Previous, Next };

struct BlockSizes {
  int nv = 0, np = 0, nu = 0, nt = 1;

  int size(Var var) const;
  int offset(Var var) const;
  int step_size() const { return 2 * nv + 2 * np + nu; }
  int total() const { return nt * step_size(); }
  int index(int step, Var var, int i) const { return step * step_size() + offset(var) + i; }
};

/// theta[id] * scale * A (or A^T), placed in block (row, col) of every step n
/// against column step n, n - 1 or n + 1.
struct OperatorTerm {
  Var row = Var::V;
  Var col = Var::V;
  std::shared_ptr<const SparseMatrix> matrix;
  bool transposed = false;
  double scale = 1.0;
  TimeCoupling coupling = TimeCoupling::Same;
  ThetaId theta = ThetaId::One;
  std::string name;
};

/// theta[id] * scale * f added to block `row` of every step.
struct RhsTerm {
  Var row = Var::V;
  std::shared_ptr<const Vector> vector;
  double scale = 1.0;
  ThetaId theta = ThetaId::One;
  std::string name;
};

struct AffineKkt {
  BlockSizes sizes;
  std::vector<OperatorTerm> terms;
  std::vector<RhsTerm> rhs;
};

/// Sum of the terms at theta as one sparse matrix of size sizes.total().
SparseMatrix assemble_operator(const AffineKkt& kkt, const Theta& th);
Vector assemble_rhs(const AffineKkt& kkt, const Theta& th);

/// Matrix-free application of the assembled operator.
Vector apply_operator(const AffineKkt& kkt, const Theta& th, const Vector& x);

/// Linear system plus the data needed to interpret it. `matrix` and `rhs`
/// act on the full (lifted) unknown; `constrained` marks the Dirichlet rows
/// of v and w, whose values are fixed to `lift`.
struct KktSystem {
  BlockSizes sizes;
  SparseMatrix matrix;
  Vector rhs;
  Vector lift;
  std::vector<char> constrained;
};

struct SolverDiagnostics {
  std::vector<double> residual_history;
  int newton_iterations = 0;
  double final_residual = 0.0;
  double seconds = 0.0;
};

struct OcpSolution {
  ParameterPoint mu;
  BlockSizes sizes;
  /// Full space-time vector including the Dirichlet lift.
  Vector x;
  double cost = 0.0;
  SolverDiagnostics diagnostics;

  Vector block(Var var, int step) const;
  /// Steps concatenated: length nt * size(var).
  Vector trajectory(Var var) const;
};

/// Truth discretization of one benchmark on a fixed mesh.
class TruthProblem {
 public:
  TruthProblem(geometry::Mesh mesh, ProblemSettings settings);

  const geometry::Mesh& mesh() const { return mesh_; }
  const fem::DofLayout& layout() const { return layout_; }
  const ProblemSettings& settings() const { return settings_; }
  ProblemId problem() const { return settings_.problem; }
  const BlockSizes& sizes() const { return kkt_.sizes; }
  const AffineKkt& affine() const { return kkt_; }

  /// Parameter-independent pieces.
  const SparseMatrix& observation_mass() const { return *obs_mass_; }
  const SparseMatrix& control_penalty() const { return *control_penalty_; }
  const SparseMatrix& control_coupling() const { return *control_coupling_; }
  const Vector& unit_lift() const { return *unit_lift_; }
  const Vector& unit_target() const { return *unit_target_; }

  /// Parameter-independent pieces: operator = sum theta[id] * matrix.
  struct Piece {
    ThetaId theta;
    std::shared_ptr<const SparseMatrix> matrix;
  };
  std::vector<Piece> mass_pieces() const;
  std::vector<Piece> viscous_pieces() const;
  std::vector<Piece> divergence_pieces() const;

  /// Operators on Omega(mu2) assembled from the affine pieces.
  SparseMatrix mass(const Theta& th) const;
  SparseMatrix viscous(const Theta& th) const;
  SparseMatrix divergence(const Theta& th) const;

  /// Inner products of the velocity, pressure and control spaces.
  const SparseMatrix& velocity_product() const { return velocity_product_; }
  const SparseMatrix& pressure_product() const { return pressure_product_; }
  const SparseMatrix& control_product() const { return control_product_; }

  /// Space-time vector with theta_Lift * unit lift in every v block.
  Vector lift_vector(const Theta& th) const;
  std::vector<char> constrained_mask() const;

  /// Velocity at t = 0 (lift included). For a steady start this is the
  /// steady Stokes flow with zero control on Omega(mu2), which does not
  /// depend on mu1 or mu3; zero otherwise and for the steady problem.
  Vector initial_velocity(const ParameterPoint& mu) const;
  /// Space-time vector with M(mu2) v(0) in the w block of step 0: the
  /// contribution of the initial state to the KKT right-hand side.
  Vector initial_rhs(const ParameterPoint& mu) const;
  /// Steady Stokes flow with zero control and unit lift amplitude at theta,
  /// Dirichlet part removed; velocity then pressure.
  Vector unit_steady_flow(const Theta& th) const;

  /// Full KKT residual (rows of constrained dofs included) and its Jacobian.
  Vector residual(const ParameterPoint& mu, const Vector& x) const;
  SparseMatrix jacobian(const ParameterPoint& mu, const Vector& x) const;

  /// J for the v and u blocks of x (lift included).
  double cost(const ParameterPoint& mu, const Vector& x) const;

 private:
  geometry::Mesh mesh_;
  fem::DofLayout layout_;
  ProblemSettings settings_;
  AffineKkt kkt_;

  std::shared_ptr<const SparseMatrix> mass_channel_, mass_rest_;
  std::shared_ptr<const SparseMatrix> stiff_xx_channel_, stiff_yy_channel_, stiff_rest_;
  std::shared_ptr<const SparseMatrix> div_fixed_, div_stretched_;
  std::shared_ptr<const SparseMatrix> obs_mass_, control_penalty_, control_coupling_;
  std::shared_ptr<const Vector> unit_lift_, unit_target_;
  std::shared_ptr<const Vector> obs_target_rhs_;
  SparseMatrix velocity_product_, pressure_product_, control_product_;

  void build_terms();
};

/// Convection contributions for the steady problem at x:
/// residual part and Jacobian part of the full KKT system.
Vector convection_residual(const TruthProblem& truth, const Vector& x);
SparseMatrix convection_jacobian(const TruthProblem& truth, const Vector& x);

KktSystem assemble_kkt_stokes_td(const TruthProblem& truth, const ParameterPoint& mu);

/// Monolithic: one sparse LU of the whole space-time system.
/// Condensed: the per-step Stokes matrix is factored once, the control is
/// solved from the dense reduced Hessian built out of impulse responses, and
/// state/adjoint follow from one forward and one backward sweep. Both return
/// the same discrete solution; the result is checked against the full KKT
/// residual either way.
enum class StokesSolver { Condensed, Monolithic };

OcpSolution solve_stokes_td(const TruthProblem& truth, const ParameterPoint& mu,
                            StokesSolver method = StokesSolver::Condensed);

/// Newton system at the iterate: matrix = Jacobian, rhs = -residual.
KktSystem assemble_newton_step_ns(const TruthProblem& truth, const ParameterPoint& mu,
                                  const OcpSolution& current);
/// Damped Newton from the Stokes optimal-control solution. Throws
/// NonConvergence or LineSearchStagnation with the residual history.
OcpSolution solve_ns_ocp(const TruthProblem& truth, const ParameterPoint& mu);

/// Dispatches on the problem id.
OcpSolution solve_ocp(const TruthProblem& truth, const ParameterPoint& mu);

/// State equation only, for a prescribed control trajectory (zero when
/// `control` is empty). Adjoint blocks of the result are zero.
OcpSolution solve_forward(const TruthProblem& truth, const ParameterPoint& mu,
                          const Vector& control = Vector());

double evaluate_cost(const TruthProblem& truth, const OcpSolution& sol);

}  // namespace podocp::ocp
