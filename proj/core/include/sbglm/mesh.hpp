#pragma once

#include <sbglm/types.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace sbglm {

/// Triangulated surface (embedded in 3-D, or planar with z = 0). Coordinates in mm.
///
/// Construction validates that triangle indices are in range, that no triangle
/// has zero area, and that every edge is shared by at most two triangles. The
/// mesh may have several connected components (e.g. two hemispheres).
class TriangularMesh {
 public:
  TriangularMesh() = default;
  TriangularMesh(Eigen::MatrixX3d vertices, Eigen::MatrixX3i triangles);

  Index n() const { return vertices_.rows(); }
  Index num_triangles() const { return triangles_.rows(); }
  const Eigen::MatrixX3d& vertices() const { return vertices_; }
  const Eigen::MatrixX3i& triangles() const { return triangles_; }

  double triangle_area(Index t) const;
  double total_area() const;

  /// Component label per vertex, labels 0..count-1 in order of first vertex.
  std::vector<int> component_labels(int* count = nullptr) const;

  /// Undirected edge list (i < j), sorted.
  std::vector<std::pair<int, int>> edges() const;

  /// Sub-mesh induced by the given vertices; `vertex_map` receives the
  /// original index of each new vertex.
  TriangularMesh submesh(const std::vector<int>& keep, std::vector<int>* vertex_map = nullptr) const;

 private:
  Eigen::MatrixX3d vertices_;
  Eigen::MatrixX3i triangles_;
};

/// Lumped-mass / cotangent-stiffness finite element matrices.
struct FemOperators {
  Vector c_diag;          ///< lumped mass, mm^2, strictly positive
  SparseMatrix C;         ///< diag(c_diag)
  SparseMatrix G;         ///< stiffness, symmetric, zero row sums
  SparseMatrix GCinvG;    ///< G C^{-1} G

  Index n() const { return c_diag.size(); }
};

/// Assembles C, G and G C^{-1} G for linear elements. Throws `InputError` naming
/// the triangle index when a triangle is degenerate.
FemOperators assemble_fem(const TriangularMesh& mesh);

/// Barycentric data-to-mesh projector Psi (N x n).
class Projector {
 public:
  Projector() = default;
  explicit Projector(RowSparseMatrix psi);

  /// Identity projector for data locations equal to mesh vertices.
  static Projector identity(Index n);

  Index num_locations() const { return psi_.rows(); }
  Index num_vertices() const { return psi_.cols(); }
  bool is_identity() const { return identity_; }
  const RowSparseMatrix& matrix() const { return psi_; }

  /// Block-diagonal K-task expansion (NK x nK), task-major ordering.
  SparseMatrix expand(Index tasks) const;

  /// Psi * w for a single task field.
  Vector apply(const Eigen::Ref<const Vector>& w) const;

 private:
  RowSparseMatrix psi_;
  bool identity_ = false;
};

struct ProjectorOptions {
  double tolerance = 1e-6;  ///< max allowed distance (mm) from the surface
};

/// Projects each location to its closest point on the mesh and stores the
/// barycentric weights of the containing triangle.
Projector build_projector(const TriangularMesh& mesh, const Eigen::MatrixX3d& locations,
                          const ProjectorOptions& options = {});

namespace io {

/// Text mesh: "n m", n lines "x y z", m lines "i j k" (0-based).
TriangularMesh read_mesh(const std::string& path);
TriangularMesh read_mesh(std::istream& in);
void write_mesh(const std::string& path, const TriangularMesh& mesh);
void write_mesh(std::ostream& out, const TriangularMesh& mesh);

/// Coordinate triplet text: a header line "rows cols nnz" followed by one
/// "row col value" line per stored entry (0-based).
SparseMatrix read_triplets(const std::string& path);
SparseMatrix read_triplets(std::istream& in);
void write_triplets(const std::string& path, const SparseMatrix& m);
void write_triplets(std::ostream& out, const SparseMatrix& m);

}  // namespace io

using Adjacency = std::vector<std::vector<std::pair<int, double>>>;

/// Graph shortest-path distances along mesh edges from `source`, truncated at
/// `max_distance`. Returns (vertex, distance) pairs including the source.
std::vector<std::pair<int, double>> edge_distances(const Adjacency& adjacency, int source,
                                                   double max_distance);

/// Weighted vertex adjacency (edge lengths).
Adjacency edge_adjacency(const TriangularMesh& mesh);

}  // namespace sbglm
