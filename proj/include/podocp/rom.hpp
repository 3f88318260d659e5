#pragma once

#include "podocp/ocp.hpp"
#include "podocp/pod.hpp"

/// Galerkin-projected optimality system and its online solvers.
///
/// Reduced unknowns are ordered [v p u w q] with v, w in the velocity space,
/// p, q in the pressure space and u in the control space.
namespace podocp::rom {

using ocp::Theta;
using ocp::Var;

/// Everything an online solve needs; holds no full-order object.
struct OnlineModel {
  ProblemSettings settings;
  int nv = 0, np = 0, nu = 0;

  /// Reduced operator = sum_q theta_q * operators[q].
  std::array<Matrix, ocp::kThetaCount> operators;
  /// Right-hand side = theta_Target * target - theta_Lift * sum_q theta_q * lift[q].
  Vector target;
  std::array<Vector, ocp::kThetaCount> lift;

  // J = 1/2 (l^2 s_ll - 2 l t s_lt + t^2 s_tt) + a^T (l obs_lift - t obs_target)
  //     + 1/2 a^T obs_mass a + 1/2 c^T control_penalty c
  // with a the v coefficients, c the u coefficients, l = theta_Lift, t = theta_Target.
  double s_ll = 0.0, s_lt = 0.0, s_tt = 0.0;
  Vector obs_lift, obs_target;
  Matrix obs_mass, control_penalty;

  /// Steady problem only. tensor[i](j, k) = E(phi_i, phi_j, phi_k),
  /// lift_first(j, k) = E(L, phi_j, phi_k), lift_second(j, k) = E(phi_j, L, phi_k),
  /// lift_lift[k] = E(L, L, phi_k), with L the unit lift.
  std::vector<Matrix> tensor;
  Matrix lift_first, lift_second;
  Vector lift_lift;

  /// Steady start of stokes_td (empty otherwise). The reduced steady Stokes
  /// system sum_q theta_q start_operators[q] s = -sum_q theta_q start_lift[q]
  /// on the initial basis ([velocity; pressure] coefficients, unit lift) gives
  /// s; the start then adds theta_Lift * sum_q theta_q (start_lift_coupling[q]
  /// + start_coupling[q] s_velocity) to the right-hand side.
  int start_nv = 0, start_np = 0;
  std::array<Matrix, ocp::kThetaCount> start_operators;
  std::array<Vector, ocp::kThetaCount> start_lift;
  std::array<Matrix, ocp::kThetaCount> start_coupling;
  std::array<Vector, ocp::kThetaCount> start_lift_coupling;

  int dimension() const { return 2 * nv + 2 * np + nu; }
  bool has_start() const { return start_nv > 0; }
  int offset(Var var) const;
  int size(Var var) const;

  /// Assembled reduced operator and right-hand side at theta.
  Matrix assemble(const Theta& th) const;
  Vector rhs(const Theta& th) const;
  /// Coefficients of the reduced steady start at unit lift amplitude.
  Vector start_coefficients(const Theta& th) const;

  /// Restriction to the leading columns of each space.
  OnlineModel restricted(int nv_keep, int np_keep, int nu_keep) const;
};

struct ReducedModel {
  ProblemId problem = ProblemId::StokesTD;
  ocp::BlockSizes sizes;
  pod::ReducedBasis basis;
  OnlineModel online;
  /// Unit lift of the truth problem (one step), used by reconstruction.
  Vector unit_lift;

  int dimension() const { return online.dimension(); }
  /// Same model with the basis truncated to n levels.
  ReducedModel truncated(int n) const;
};

/// Projects every affine term, the lift corrections, the cost and (steady
/// problem) the convection tensor onto the basis.
ReducedModel project(const ocp::TruthProblem& truth, const pod::ReducedBasis& basis);

struct ReducedSolution {
  Vector coefficients;
  double cost = 0.0;
  double residual = 0.0;
  int newton_iterations = 0;
  double seconds = 0.0;
};

/// Dense symmetric-indefinite solve (stokes_td) or damped reduced Newton from
/// zero coefficients (ns_steady), with the truth tolerances.
ReducedSolution solve_reduced(const OnlineModel& model, const ParameterPoint& mu);

/// Reduced residual and Jacobian at the coefficients.
Vector reduced_residual(const OnlineModel& model, const Theta& th, const Vector& c);
Matrix reduced_jacobian(const OnlineModel& model, const Theta& th, const Vector& c);
double reduced_cost(const OnlineModel& model, const Theta& th, const Vector& c);

/// Full space-time vector: basis times coefficients plus the lift.
Vector reconstruct(const ReducedModel& model, const ParameterPoint& mu, const Vector& c);

/// Coefficients of the X-orthogonal projection of a full solution.
Vector project_solution(const ReducedModel& model, const ocp::TruthProblem& truth,
                        const ocp::OcpSolution& sol);

/// Relative errors per variable in the inner-product norms.
std::array<double, ocp::kVarCount> relative_errors(const ocp::TruthProblem& truth, const Vector& approx,
                                                    const Vector& reference);

}  // namespace podocp::rom
