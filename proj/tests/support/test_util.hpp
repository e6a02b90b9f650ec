#pragma once

#include <sbglm/mesh.hpp>
#include <sbglm/simulator.hpp>
#include <sbglm/sufficient_stats.hpp>
#include <sbglm/types.hpp>

#include <random>

namespace sbglm::testing {

inline Matrix dense(const SparseMatrix& m) { return Matrix(m); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double max_rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// Grid mesh with interior vertices jittered so triangles are irregular.
inline TriangularMesh jittered_grid(Index rows, Index cols, double spacing, double jitter, std::uint64_t seed) {
  TriangularMesh g = grid_mesh(rows, cols, spacing);
  Eigen::MatrixX3d v = g.vertices();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-jitter, jitter);
  for (Index r = 1; r + 1 < rows; ++r) {
    for (Index c = 1; c + 1 < cols; ++c) {
      v(r * cols + c, 0) += u(rng) * spacing;
      v(r * cols + c, 1) += u(rng) * spacing;
    }
  }
  return TriangularMesh(v, g.triangles());
}

/// Disjoint union of two meshes; the second is shifted along x.
inline TriangularMesh join_meshes(const TriangularMesh& a, const TriangularMesh& b, double shift) {
  Eigen::MatrixX3d v(a.n() + b.n(), 3);
  v.topRows(a.n()) = a.vertices();
  v.bottomRows(b.n()) = b.vertices();
  v.bottomRows(b.n()).col(0).array() += shift;
  Eigen::MatrixX3i t(a.num_triangles() + b.num_triangles(), 3);
  t.topRows(a.num_triangles()) = a.triangles();
  t.bottomRows(b.num_triangles()) = b.triangles().array() + static_cast<int>(a.n());
  return TriangularMesh(v, t);
}

/// Dense stacked design (T N) x (n K) for one run: row v T + t, column k n + i.
inline Matrix dense_design(const SessionData& d, const Projector& psi, Index n) {
  const Index T = d.timepoints(), N = d.locations(), K = d.tasks();
  const Matrix p = psi.is_identity() ? Matrix(Matrix::Identity(N, n)) : Matrix(psi.matrix());
  Matrix big = Matrix::Zero(T * N, n * K);
  for (Index v = 0; v < N; ++v) {
    const Matrix& x = d.x.at(v);
    for (Index k = 0; k < K; ++k) {
      for (Index i = 0; i < n; ++i) {
        if (p(v, i) != 0.0) big.block(v * T, k * n + i, T, 1) = x.col(k) * p(v, i);
      }
    }
  }
  return big;
}

/// Responses stacked location-major to match `dense_design`.
inline Vector stacked_response(const SessionData& d) {
  return Eigen::Map<const Vector>(d.y.data(), d.y.size());
}

/// Random session on a mesh with identity projector: shared or per-location design.
inline SessionData random_session(Index T, Index N, Index K, bool per_location, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  SessionData d;
  d.y.resize(T, N);
  for (Index i = 0; i < d.y.size(); ++i) d.y.data()[i] = z(rng);
  auto rnd = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
  };
  if (per_location) {
    std::vector<Matrix> xs;
    for (Index v = 0; v < N; ++v) xs.push_back(rnd(T, K));
    d.x = Design(std::move(xs));
  } else {
    d.x = Design(rnd(T, K));
  }
  d.z = Matrix(T, 0);
  d.whitened = true;
  return d;
}

}  // namespace sbglm::testing
