#include "podocp/linalg.hpp"

#include <Eigen/UmfPackSupport>
#include <lapacke.h>

#include <cmath>
#include <sstream>

namespace podocp::linalg {

SparseMatrix eliminate_symmetric(const SparseMatrix& a, const std::vector<char>& constrained) {
  SparseMatrix out = a;
  out.prune([&](Eigen::Index row, Eigen::Index col, double) {
    return !constrained[row] && !constrained[col];
  });
  std::vector<Triplet> diag;
  for (std::size_t i = 0; i < constrained.size(); ++i)
    if (constrained[i]) diag.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  SparseMatrix id(a.rows(), a.cols());
  id.setFromTriplets(diag.begin(), diag.end());
  out += id;
  out.makeCompressed();
  return out;
}

double relative_asymmetry(const SparseMatrix& a) {
  const double scale = a.norm();
  if (scale == 0.0) return 0.0;
  const SparseMatrix t = a.transpose();
  return (a - t).norm() / scale;
}

double relative_asymmetry(const Matrix& a) {
  const double scale = a.norm();
  if (scale == 0.0) return 0.0;
  return (a - a.transpose()).norm() / scale;
}

struct SparseLu::Impl {
  // UmfPackLU refers to the matrix it factorized, so keep it alive here.
  SparseMatrix matrix;
  Eigen::UmfPackLU<SparseMatrix> lu;
};

SparseLu::SparseLu() : impl_(std::make_unique<Impl>()) {
  // Refinement steps dominate repeated solves; callers check residuals.
  impl_->lu.umfpackControl()(UMFPACK_IRSTEP) = 0;
}
SparseLu::~SparseLu() = default;
SparseLu::SparseLu(SparseLu&&) noexcept = default;
SparseLu& SparseLu::operator=(SparseLu&&) noexcept = default;

SparseLu::SparseLu(const SparseMatrix& a) : SparseLu() { factorize(a); }

void SparseLu::factorize(const SparseMatrix& a) {
  impl_->matrix = a;
  impl_->matrix.makeCompressed();
  impl_->lu.compute(impl_->matrix);
  if (impl_->lu.info() != Eigen::Success) {
    std::ostringstream os;
    os << "sparse LU factorization failed for a " << a.rows() << " x " << a.cols()
       << " system (singular or numerically degenerate)";
    throw SolverFailure(os.str());
  }
}

Vector SparseLu::solve(const Vector& b) const {
  Vector x = impl_->lu.solve(b);
  if (impl_->lu.info() != Eigen::Success || !x.allFinite())
    throw SolverFailure("sparse LU solve failed");
  return x;
}

Matrix SparseLu::solve(const Matrix& b) const {
  Matrix x = impl_->lu.solve(b);
  if (impl_->lu.info() != Eigen::Success || !x.allFinite())
    throw SolverFailure("sparse LU solve failed");
  return x;
}

Vector solve_symmetric_indefinite(const Matrix& a, const Vector& b) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  if (a.cols() != n || b.size() != n) throw InvalidArgument("dense solve: dimension mismatch");
  if (n == 0) return Vector();
  Matrix work = a;
  Vector x = b;
  std::vector<lapack_int> ipiv(n);
  const lapack_int info =
      LAPACKE_dsysv(LAPACK_COL_MAJOR, 'L', n, 1, work.data(), n, ipiv.data(), x.data(), n);
  if (info > 0) {
    std::ostringstream os;
    os << "symmetric-indefinite factorization hit a zero pivot at index " << (info - 1);
    throw SingularMatrix(os.str(), static_cast<int>(info - 1));
  }
  if (info < 0) throw SolverFailure("dsysv: invalid argument");
  // Exact zero pivots are rare in floating point; catch near-singular systems
  // by an explicit residual check.
  const double res = (a * x - b).norm();
  if (!x.allFinite() || res > 1e-6 * (a.norm() * x.norm() + b.norm())) {
    std::ostringstream os;
    os << "symmetric-indefinite solve is numerically singular (residual " << res << ")";
    throw SingularMatrix(os.str(), -1);
  }
  return x;
}

}  // namespace podocp::linalg
