#include "podocp/linalg.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace podocp;

namespace {

SparseMatrix laplacian_1d(int n) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0);
    if (i > 0) t.emplace_back(i, i - 1, -1.0);
    if (i + 1 < n) t.emplace_back(i, i + 1, -1.0);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

}  // namespace

TEST_CASE("sparse LU solves and reports singular matrices") {
  const SparseMatrix a = laplacian_1d(30);
  const Vector b = testing::random_vector(30, 4);
  linalg::SparseLu lu(a);
  CHECK((a * lu.solve(b) - b).norm() <= 1e-12 * b.norm());
  Matrix rhs(30, 2);
  rhs << b, 2.0 * b;
  const Matrix x = lu.solve(rhs);
  CHECK((a * x - rhs).norm() <= 1e-12 * rhs.norm());

  SparseMatrix singular(2, 2);
  singular.insert(0, 0) = 1.0;
  singular.makeCompressed();
  CHECK_THROWS_AS(linalg::SparseLu{singular}, SolverFailure);
}

TEST_CASE("symmetric elimination keeps symmetry") {
  const SparseMatrix a = laplacian_1d(10);
  std::vector<char> mask(10, 0);
  mask[0] = mask[9] = mask[4] = 1;
  const SparseMatrix e = linalg::eliminate_symmetric(a, mask);
  CHECK(linalg::relative_asymmetry(e) == 0.0);
  const Matrix d(e);
  for (int i : {0, 4, 9}) {
    CHECK(d(i, i) == 1.0);
    CHECK(d.row(i).cwiseAbs().sum() == 1.0);
    CHECK(d.col(i).cwiseAbs().sum() == 1.0);
  }
}

TEST_CASE("relative asymmetry") {
  Matrix a(2, 2);
  a << 1, 2, 0, 1;
  CHECK(linalg::relative_asymmetry(a) == doctest::Approx(std::sqrt(8.0) / std::sqrt(6.0)));
  CHECK(linalg::relative_asymmetry(Matrix(Matrix::Identity(3, 3))) == 0.0);
}

TEST_CASE("dense symmetric indefinite solve") {
  Matrix a(3, 3);
  a << 2, 1, 0, 1, 0, 1, 0, 1, -3;
  const Vector b = testing::random_vector(3, 9);
  const Vector x = linalg::solve_symmetric_indefinite(a, b);
  CHECK((a * x - b).norm() <= 1e-13);
  CHECK_THROWS_AS(linalg::solve_symmetric_indefinite(Matrix::Zero(2, 2), Vector::Ones(2)), linalg::SingularMatrix);
}
