#include <doctest.h>

#include <sbglm/error.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/simulator.hpp>

#include "test_util.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace sbglm;
using sbglm::testing::jittered_grid;

namespace {

TriangularMesh single_triangle(Eigen::Vector3d a, Eigen::Vector3d b, Eigen::Vector3d c) {
  Eigen::MatrixX3d v(3, 3);
  v.row(0) = a;
  v.row(1) = b;
  v.row(2) = c;
  Eigen::MatrixX3i t(1, 3);
  t << 0, 1, 2;
  return TriangularMesh(v, t);
}

}  // namespace

TEST_CASE("equilateral triangle lumped mass sums to its area") {
  const auto m = single_triangle({0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2.0, 0});
  const FemOperators fem = assemble_fem(m);
  CHECK(fem.c_diag.sum() == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-14));
  CHECK(fem.c_diag.sum() == doctest::Approx(0.4330).epsilon(1e-4));
  for (Index i = 0; i < 3; ++i) CHECK(fem.c_diag[i] == doctest::Approx(std::sqrt(3.0) / 12.0));
}

TEST_CASE("right triangle stiffness matches the cotangent formula by hand") {
  const auto m = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  const Matrix G = Matrix(assemble_fem(m).G);
  Matrix expected(3, 3);
  expected << 1.0, -0.5, -0.5,
             -0.5, 0.5, 0.0,
             -0.5, 0.0, 0.5;
  CHECK((G - expected).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(G(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("FEM invariants on an irregular mesh") {
  const auto mesh = jittered_grid(9, 11, 1.5, 0.25, 3);
  const FemOperators fem = assemble_fem(mesh);
  const Matrix G = Matrix(fem.G), GCG = Matrix(fem.GCinvG);
  CHECK((fem.c_diag.array() > 0.0).all());
  CHECK(fem.c_diag.sum() == doctest::Approx(mesh.total_area()).epsilon(1e-12));
  CHECK((G * Vector::Ones(mesh.n())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((G - G.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((GCG - GCG.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix oracle = G * fem.c_diag.cwiseInverse().asDiagonal() * G;
  CHECK((GCG - oracle).cwiseAbs().maxCoeff() < 1e-12 * oracle.cwiseAbs().maxCoeff());
  CHECK(Matrix(fem.C).diagonal().isApprox(fem.c_diag));
}

TEST_CASE("assembly does not depend on triangle order") {
  const auto mesh = jittered_grid(6, 7, 1.0, 0.2, 5);
  Eigen::MatrixX3i tri = mesh.triangles();
  Eigen::MatrixX3i rev(tri.rows(), 3);
  for (Index t = 0; t < tri.rows(); ++t) rev.row(t) = tri.row(tri.rows() - 1 - t);
  const TriangularMesh other(mesh.vertices(), rev);
  const FemOperators a = assemble_fem(mesh), b = assemble_fem(other);
  CHECK((Matrix(a.G) - Matrix(b.G)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((a.c_diag - b.c_diag).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((Matrix(a.GCinvG) - Matrix(b.GCinvG)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("quadratic form approximates the Dirichlet energy on a flat grid") {
  const Index rows = 41, cols = 41;
  const double h = 0.5, L = (cols - 1) * h;
  const auto mesh = grid_mesh(rows, cols, h);
  const FemOperators fem = assemble_fem(mesh);
  auto f = [&](double x, double y) { return std::sin(std::numbers::pi * x / L) * std::cos(std::numbers::pi * y / L); };
  Vector x(mesh.n());
  for (Index i = 0; i < mesh.n(); ++i) x[i] = f(mesh.vertices()(i, 0), mesh.vertices()(i, 1));
  const double energy = x.dot(fem.G * x);

  // dense finite-difference Laplacian energy: squared differences over grid edges
  Matrix lap = Matrix::Zero(mesh.n(), mesh.n());
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      for (Index j : {c + 1 < cols ? i + 1 : -1, r + 1 < rows ? i + cols : -1}) {
        if (j < 0) continue;
        lap(i, i) += 1.0;
        lap(j, j) += 1.0;
        lap(i, j) -= 1.0;
        lap(j, i) -= 1.0;
      }
    }
  }
  const double fd = x.dot(lap * x);
  CHECK(std::abs(energy - fd) < 0.05 * fd);
  // analytic integral of |grad f|^2 over the square is pi^2 / 2
  CHECK(std::abs(energy - std::numbers::pi * std::numbers::pi / 2.0) < 0.05 * energy);
}

TEST_CASE("mesh validation rejects bad input") {
  Eigen::MatrixX3d v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Eigen::MatrixX3i bad(1, 3);
  bad << 0, 1, 3;
  CHECK_THROWS_AS(TriangularMesh(v, bad), InputError);

  Eigen::MatrixX3d line(3, 3);
  line << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  Eigen::MatrixX3i t(1, 3);
  t << 0, 1, 2;
  CHECK_THROWS_AS(TriangularMesh(line, t), InputError);

  Eigen::MatrixX3d fan(5, 3);
  fan << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1;
  Eigen::MatrixX3i three(3, 3);
  three << 0, 1, 2, 0, 1, 3, 0, 1, 4;
  CHECK_THROWS_AS(TriangularMesh(fan, three), InputError);
}

TEST_CASE("disjoint pieces are separate components") {
  Simulation s;
  SimConfig cfg;
  cfg.n_vertices = 100;
  cfg.hemispheres = 2;
  cfg.bump_radius_mm = 4.0;
  cfg.bumps_per_task = 1;
  cfg.tasks = 1;
  cfg.timepoints = 40;
  s = simulate(cfg);
  int count = 0;
  const auto labels = s.mesh.component_labels(&count);
  CHECK(count == 2);
  CHECK(labels.front() == 0);
  CHECK(labels.back() == 1);
}

TEST_CASE("projector at vertices, centroids and edge midpoints") {
  const auto mesh = jittered_grid(5, 6, 1.0, 0.2, 11);
  SUBCASE("vertices give a permuted identity") {
    Eigen::MatrixX3d loc(4, 3);
    const int ids[4] = {7, 0, 29, 13};
    for (int r = 0; r < 4; ++r) loc.row(r) = mesh.vertices().row(ids[r]);
    const Projector p = build_projector(mesh, loc);
    const Matrix psi = Matrix(p.matrix());
    for (int r = 0; r < 4; ++r) {
      CHECK(psi(r, ids[r]) == 1.0);
      CHECK(psi.row(r).sum() == doctest::Approx(1.0));
      CHECK(p.matrix().row(r).nonZeros() == 1);
    }
    const Projector all = build_projector(mesh, mesh.vertices());
    CHECK(all.is_identity());
  }
  SUBCASE("centroid") {
    const auto tri = mesh.triangles().row(9);
    Eigen::MatrixX3d loc(1, 3);
    loc.row(0) = (mesh.vertices().row(tri[0]) + mesh.vertices().row(tri[1]) + mesh.vertices().row(tri[2])) / 3.0;
    const Matrix psi = Matrix(build_projector(mesh, loc).matrix());
    for (int c = 0; c < 3; ++c) CHECK(psi(0, tri[c]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(psi.row(0).sum() == doctest::Approx(1.0));
  }
  SUBCASE("edge midpoint") {
    const auto tri = mesh.triangles().row(4);
    Eigen::MatrixX3d loc(1, 3);
    loc.row(0) = 0.5 * (mesh.vertices().row(tri[0]) + mesh.vertices().row(tri[1]));
    const Projector p = build_projector(mesh, loc);
    const Matrix psi = Matrix(p.matrix());
    CHECK(psi(0, tri[0]) == doctest::Approx(0.5));
    CHECK(psi(0, tri[1]) == doctest::Approx(0.5));
    CHECK(p.matrix().row(0).nonZeros() == 2);
  }
  SUBCASE("far location reports its index") {
    Eigen::MatrixX3d loc(2, 3);
    loc << 1.0, 1.0, 0.0, 2.0, 2.0, 5.0;
    try {
      build_projector(mesh, loc);
      FAIL("expected an error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find(" 1") != std::string::npos);
    }
  }
}

TEST_CASE("projector expansion is task-major block diagonal") {
  const auto mesh = jittered_grid(4, 4, 1.0, 0.1, 2);
  Eigen::MatrixX3d loc(3, 3);
  loc << 0.5, 0.5, 0, 1.2, 2.1, 0, 3, 3, 0;
  const Projector p = build_projector(mesh, loc, {1e-3});
  const Matrix big = Matrix(p.expand(2));
  CHECK(big.rows() == 6);
  CHECK(big.cols() == 32);
  CHECK((big.topLeftCorner(3, 16) - Matrix(p.matrix())).norm() == 0.0);
  CHECK((big.bottomRightCorner(3, 16) - Matrix(p.matrix())).norm() == 0.0);
  CHECK(big.topRightCorner(3, 16).norm() == 0.0);
}

TEST_CASE("mesh and triplet text round trips") {
  const auto mesh = jittered_grid(4, 5, 1.0, 0.2, 8);
  std::stringstream ss;
  io::write_mesh(ss, mesh);
  const TriangularMesh back = io::read_mesh(ss);
  CHECK(back.n() == mesh.n());
  CHECK((back.vertices() - mesh.vertices()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.triangles() - mesh.triangles()).cwiseAbs().maxCoeff() == 0);

  const SparseMatrix g = assemble_fem(mesh).G;
  std::stringstream ts;
  io::write_triplets(ts, g);
  const SparseMatrix g2 = io::read_triplets(ts);
  CHECK((Matrix(g) - Matrix(g2)).cwiseAbs().maxCoeff() == 0.0);

  std::stringstream broken("3 1\n0 0 0\n1 0 0\n");
  CHECK_THROWS_AS(io::read_mesh(broken), InputError);
}

TEST_CASE("edge distances follow shortest paths") {
  const auto mesh = grid_mesh(3, 3, 2.0);
  const auto d = edge_distances(edge_adjacency(mesh), 0, 100.0);
  CHECK(d.size() == 9);
  for (const auto& [v, dist] : d) {
    if (v == 0) CHECK(dist == 0.0);
    if (v == 8) CHECK(dist == doctest::Approx(2.0 * std::sqrt(8.0)));  // two diagonal hops
    if (v == 2) CHECK(dist == doctest::Approx(4.0));
  }
  CHECK(edge_distances(edge_adjacency(mesh), 0, 2.5).size() == 3);
}
