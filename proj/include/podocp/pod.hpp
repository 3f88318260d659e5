#pragma once

#include "podocp/ocp.hpp"

#include <cstdint>
#include <optional>

/// Offline reduction: snapshots, POD, supremizers and aggregated bases.
namespace podocp::pod {

using ocp::Var;

/// Uniform sample of the box, reproducible for a given seed.
std::vector<ParameterPoint> sample_training_set(ProblemId problem, const ParameterBox& box,
                                                int size, std::uint64_t seed);

/// Truth solutions at the training parameters. One column per parameter and
/// variable; columns are space-time trajectories (steps concatenated). The
/// state velocity is stored with the Dirichlet lift removed.
struct SnapshotSet {
  ProblemId problem = ProblemId::StokesTD;
  ocp::BlockSizes sizes;
  std::vector<ParameterPoint> parameters;
  std::array<Matrix, ocp::kVarCount> columns;
  std::vector<double> cost;
  std::vector<double> truth_seconds;
  /// Parameters whose truth solve failed; they are not in `parameters`.
  std::vector<std::string> failures;

  int count() const { return static_cast<int>(parameters.size()); }
  bool partial() const { return !failures.empty(); }
  const Matrix& of(Var var) const { return columns[static_cast<int>(var)]; }
  Matrix& of(Var var) { return columns[static_cast<int>(var)]; }
};

/// Solves the truth problem at every parameter on up to `jobs` threads.
/// Failing parameters are reported through warn() and recorded in failures.
SnapshotSet collect_snapshots(const ocp::TruthProblem& truth,
                              const std::vector<ParameterPoint>& parameters, int jobs = 1);

/// Block-diagonal inner product I_nt (x) X on space-time vectors.
class InnerProduct {
 public:
  InnerProduct() = default;
  InnerProduct(SparseMatrix x, int blocks);

  int block_size() const { return static_cast<int>(x_.rows()); }
  int blocks() const { return blocks_; }
  int size() const { return block_size() * blocks_; }
  const SparseMatrix& matrix() const { return x_; }

  Matrix apply(const Matrix& a) const;
  double dot(const Vector& a, const Vector& b) const;
  double norm(const Vector& a) const { return std::sqrt(std::max(0.0, dot(a, a))); }
  /// A^T X B.
  Matrix gram(const Matrix& a, const Matrix& b) const;
  /// R A with X = R^T R (Cholesky factor), so (RA)^T (RA) = A^T X A.
  Matrix weighted(const Matrix& a) const;

 private:
  SparseMatrix x_;
  int blocks_ = 1;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix>> chol_;
};

/// Velocity: H1 (stiffness + mass); pressure: L2; control: H1 on Gamma_c.
InnerProduct inner_product_for(const ocp::TruthProblem& truth, Var var);

struct PodResult {
  /// Eigenvalues of the correlation matrix (1/M) S^T X S, descending, with
  /// numerically zero values (below 1e-24 lambda_1) set to 0.
  Vector eigenvalues;
  /// Smallest count whose retained energy is at least 1 - eps_tol, capped by
  /// n_max and by the number of positive eigenvalues.
  int retained = 0;
  /// X-orthonormal modes; up to n_max columns (all positive eigenvalues).
  Matrix modes;

  double retained_energy(int n) const;
};

/// Method of snapshots. The correlation eigenpairs are obtained from a thin
/// SVD of the Cholesky-weighted snapshot matrix, which avoids squaring the
/// condition number. Modes are re-orthonormalized and sign-normalized
/// (largest-magnitude entry positive).
PodResult pod(const Matrix& snapshots, const InnerProduct& ip, double eps_tol, int n_max);

/// Riesz representers in the velocity inner product of v -> b(v, q_k) for
/// each pressure column (space-time, step by step, or a single step), with
/// the divergence of the reference domain. Zero on Dirichlet dofs.
Matrix compute_supremizers(const ocp::TruthProblem& truth, const Matrix& pressure_modes);

enum class BasisGroup : int { State = 0, Adjoint = 1, StateSupremizer = 2, AdjointSupremizer = 3 };

/// One orthonormal basis with the provenance of its columns.
struct BasisSpace {
  Matrix columns;
  std::vector<int> level;
  std::vector<BasisGroup> group;

  int size() const { return static_cast<int>(columns.cols()); }
  /// Number of leading columns whose level is below n.
  int prefix(int n) const;
};

/// Single-step spaces for the steady Stokes flow that starts the transient
/// problem. Velocity: POD modes of the training flows plus their pressure
/// supremizers, X-orthonormal, Dirichlet part removed. Empty when the start
/// is zero or the problem is steady. Not part of the optimality system, so
/// it does not count in dimension().
struct InitialBasis {
  Matrix velocity, pressure;

  bool empty() const { return velocity.cols() == 0; }
};

/// Steady flows unit_steady_flow(theta(mu)) at the parameters, compressed by
/// POD keeping every mode above round-off (at most n_max per field). The
/// flows depend smoothly on one parameter, so this costs only a few modes.
InitialBasis build_initial_basis(const ocp::TruthProblem& truth, const std::vector<ParameterPoint>& parameters,
                                 int n_max);

/// Velocity (shared by v and w), pressure (shared by p and q) and control
/// spaces. Columns are interleaved by level so truncating to n keeps exactly
/// the columns built from the first n modes of every kind.
struct ReducedBasis {
  BasisSpace velocity, pressure, control;
  InitialBasis initial;
  int n = 0;
  bool supremizers = true;

  /// 2 dim(V) + 2 dim(P) + dim(U): 13 n with supremizers, 9 n without.
  int dimension() const { return 2 * velocity.size() + 2 * pressure.size() + control.size(); }
  ReducedBasis truncated(int n) const;
};

struct AggregateInput {
  Matrix state_velocity, adjoint_velocity;
  Matrix state_supremizers, adjoint_supremizers;
  Matrix state_pressure, adjoint_pressure;
  Matrix control;
};

/// Interleaves, X-orthonormalizes (twice-iterated Gram-Schmidt) and drops
/// numerically dependent columns with a warning.
ReducedBasis aggregate(const AggregateInput& in, const InnerProduct& velocity,
                       const InnerProduct& pressure, const InnerProduct& control,
                       bool with_supremizers = true);

struct OfflineResult {
  ReducedBasis basis;
  std::array<PodResult, ocp::kVarCount> spectra;
};

/// POD of every variable, supremizers, aggregation. The common N is the
/// largest per-variable retained count, capped by n_max. Builds the initial
/// basis from the snapshot parameters when the problem starts from rest flow.
OfflineResult build_reduced_basis(const ocp::TruthProblem& truth, const SnapshotSet& snapshots,
                                  double eps_tol, int n_max, bool with_supremizers = true);

}  // namespace podocp::pod
