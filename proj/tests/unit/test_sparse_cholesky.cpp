#include <doctest.h>

#include <sbglm/error.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/sparse_cholesky.hpp>

#include "test_util.hpp"

#include <random>

using namespace sbglm;
using sbglm::testing::jittered_grid;

namespace {

SparseMatrix mesh_spd(Index rows, Index cols, std::uint64_t seed) {
  const auto mesh = jittered_grid(rows, cols, 1.0, 0.25, seed);
  const FemOperators fem = assemble_fem(mesh);
  SparseMatrix a = 0.7 * fem.C + 2.0 * fem.G + fem.GCinvG;
  a.makeCompressed();
  return a;
}

}  // namespace

TEST_CASE("selected inverse matches the dense inverse on the factor pattern") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const SparseMatrix a = mesh_spd(6, 7, seed);
    SparseCholesky chol;
    chol.compute(a);
    const SelectedInverse s = chol.selected_inverse();
    const Matrix inv = Matrix(a).inverse();
    CHECK((s.diagonal() - inv.diagonal()).cwiseAbs().maxCoeff() < 1e-10 * inv.diagonal().maxCoeff());
    Index checked = 0;
    for (Index c = 0; c < a.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(a, c); it; ++it) {
        REQUIRE(s.contains(it.row(), c));
        CHECK(std::abs(s(it.row(), c) - inv(it.row(), c)) < 1e-10 * inv.cwiseAbs().maxCoeff());
        CHECK(s(it.row(), c) == s(c, it.row()));
        ++checked;
      }
    }
    CHECK(checked == a.nonZeros());
    const SparseMatrix b = mesh_spd(6, 7, seed + 10);
    CHECK(s.trace_product(b) == doctest::Approx((Matrix(b) * inv).trace()).epsilon(1e-10));
  }
}

TEST_CASE("log determinant and solve against dense oracles") {
  const SparseMatrix a = mesh_spd(5, 6, 4);
  SparseCholesky chol;
  chol.compute(a);
  const Matrix d = Matrix(a);
  CHECK(chol.log_determinant() == doctest::Approx(std::log(d.determinant())).epsilon(1e-10));
  Vector b = Vector::LinSpaced(a.rows(), -1.0, 2.0);
  CHECK((chol.solve(b) - d.ldlt().solve(b)).norm() < 1e-10 * b.norm());
  const Matrix bb = Matrix::Random(a.rows(), 3);
  CHECK((chol.solve_columns(bb) - d.ldlt().solve(bb)).norm() < 1e-10 * bb.norm());
}

TEST_CASE("sampling transform has covariance equal to the inverse") {
  const SparseMatrix a = mesh_spd(4, 5, 2);
  SparseCholesky chol;
  chol.compute(a);
  const Index n = a.rows();
  Matrix B(n, n);
  for (Index i = 0; i < n; ++i) B.col(i) = chol.sample(Vector::Unit(n, i));
  const Matrix inv = Matrix(a).inverse();
  CHECK((B * B.transpose() - inv).cwiseAbs().maxCoeff() < 1e-10 * inv.cwiseAbs().maxCoeff());
}

TEST_CASE("refactorization reuses the symbolic analysis") {
  const SparseMatrix a = mesh_spd(5, 5, 6);
  SparseCholesky chol;
  chol.analyze(a);
  for (double s : {1.0, 2.5, 0.1}) {
    const SparseMatrix as = s * a;
    chol.factorize(as);
    CHECK(chol.log_determinant() == doctest::Approx(std::log(Matrix(as).determinant())).epsilon(1e-10));
  }
}

TEST_CASE("indefinite matrices are rejected") {
  SparseMatrix a(2, 2);
  a.insert(0, 0) = 1.0;
  a.insert(1, 1) = -1.0;
  a.makeCompressed();
  SparseCholesky chol;
  CHECK_THROWS_AS(chol.compute(a), NotPositiveDefinite);
  CHECK_THROWS_AS(chol.solve(Vector::Ones(2)), NumericalError);
}
