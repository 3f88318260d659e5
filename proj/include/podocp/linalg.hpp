#pragma once

#include "podocp/common.hpp"

#include <memory>

namespace podocp::linalg {

/// Zeroes the rows and columns flagged in `constrained` and puts 1 on their
/// diagonal. Symmetric matrices stay symmetric.
SparseMatrix eliminate_symmetric(const SparseMatrix& a, const std::vector<char>& constrained);

/// ||A - A^T||_F / ||A||_F.
double relative_asymmetry(const SparseMatrix& a);
double relative_asymmetry(const Matrix& a);

/// Sparse LU factorization (UMFPACK). Throws SolverFailure when singular.
class SparseLu {
 public:
  SparseLu();
  ~SparseLu();
  SparseLu(SparseLu&&) noexcept;
  SparseLu& operator=(SparseLu&&) noexcept;

  explicit SparseLu(const SparseMatrix& a);
  void factorize(const SparseMatrix& a);
  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Dense factorization failure. pivot() is the zero pivot index, or -1 when
/// the system was only detected as numerically singular.
class SingularMatrix : public SolverFailure {
 public:
  SingularMatrix(const std::string& what, int pivot) : SolverFailure(what), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

/// Symmetric-indefinite dense solve (LAPACK Bunch-Kaufman). Throws
/// SingularMatrix on a zero pivot or an unacceptable residual.
Vector solve_symmetric_indefinite(const Matrix& a, const Vector& b);

}  // namespace podocp::linalg
