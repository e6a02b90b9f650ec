#include <sbglm/mesh.hpp>

#include <sbglm/error.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace sbglm {

namespace {

Eigen::Vector3d corner(const Eigen::MatrixX3d& v, int i) { return v.row(i).transpose(); }

double area_of(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

TriangularMesh::TriangularMesh(Eigen::MatrixX3d vertices, Eigen::MatrixX3i triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const Index n = vertices_.rows();
  if (!vertices_.allFinite()) throw InputError("mesh: non-finite vertex coordinates");
  std::map<std::pair<int, int>, int> edge_use;
  for (Index t = 0; t < triangles_.rows(); ++t) {
    for (int c = 0; c < 3; ++c) {
      const int i = triangles_(t, c);
      if (i < 0 || i >= n) {
        throw InputError("mesh: triangle " + std::to_string(t) + " references vertex " +
                         std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (triangle_area(t) <= 1e-14 * std::max(1.0, vertices_.cwiseAbs().maxCoeff())) {
      throw InputError("mesh: degenerate (zero-area) triangle " + std::to_string(t));
    }
    for (int c = 0; c < 3; ++c) {
      int a = triangles_(t, c), b = triangles_(t, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      if (++edge_use[{a, b}] > 2) {
        throw InputError("mesh: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                         ") is shared by more than two triangles");
      }
    }
  }
}

double TriangularMesh::triangle_area(Index t) const {
  return area_of(corner(vertices_, triangles_(t, 0)), corner(vertices_, triangles_(t, 1)),
                 corner(vertices_, triangles_(t, 2)));
}

double TriangularMesh::total_area() const {
  double total = 0.0;
  for (Index t = 0; t < num_triangles(); ++t) total += triangle_area(t);
  return total;
}

std::vector<int> TriangularMesh::component_labels(int* count) const {
  const Index nv = n();
  std::vector<int> parent(nv);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (Index t = 0; t < num_triangles(); ++t) {
    for (int c = 1; c < 3; ++c) {
      const int a = find(triangles_(t, 0)), b = find(triangles_(t, c));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> label(nv, -1);
  std::unordered_map<int, int> root_label;
  int next = 0;
  for (Index i = 0; i < nv; ++i) {
    const int r = find(static_cast<int>(i));
    auto [it, inserted] = root_label.emplace(r, next);
    if (inserted) ++next;
    label[i] = it->second;
  }
  if (count) *count = next;
  return label;
}

std::vector<std::pair<int, int>> TriangularMesh::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(3 * num_triangles());
  for (Index t = 0; t < num_triangles(); ++t) {
    for (int c = 0; c < 3; ++c) {
      int a = triangles_(t, c), b = triangles_(t, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      out.emplace_back(a, b);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TriangularMesh TriangularMesh::submesh(const std::vector<int>& keep, std::vector<int>* vertex_map) const {
  std::vector<int> new_index(n(), -1);
  Eigen::MatrixX3d v(static_cast<Index>(keep.size()), 3);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    new_index.at(keep[i]) = static_cast<int>(i);
    v.row(static_cast<Index>(i)) = vertices_.row(keep[i]);
  }
  std::vector<Eigen::Vector3i> tris;
  for (Index t = 0; t < num_triangles(); ++t) {
    const Eigen::Vector3i tri(new_index[triangles_(t, 0)], new_index[triangles_(t, 1)],
                              new_index[triangles_(t, 2)]);
    if (tri.minCoeff() >= 0) tris.push_back(tri);
  }
  Eigen::MatrixX3i f(static_cast<Index>(tris.size()), 3);
  for (std::size_t t = 0; t < tris.size(); ++t) f.row(static_cast<Index>(t)) = tris[t].transpose();
  if (vertex_map) *vertex_map = keep;
  return TriangularMesh(std::move(v), std::move(f));
}

FemOperators assemble_fem(const TriangularMesh& mesh) {
  const Index n = mesh.n();
  const auto& V = mesh.vertices();
  const auto& F = mesh.triangles();
  FemOperators fem;
  fem.c_diag = Vector::Zero(n);
  std::vector<Triplet> g;
  g.reserve(9 * static_cast<std::size_t>(F.rows()));
  for (Index t = 0; t < F.rows(); ++t) {
    const double area = mesh.triangle_area(t);
    if (!(area > 0.0)) throw InputError("assemble_fem: degenerate triangle " + std::to_string(t));
    for (int c = 0; c < 3; ++c) {
      const int k = F(t, c), i = F(t, (c + 1) % 3), j = F(t, (c + 2) % 3);
      fem.c_diag[k] += area / 3.0;
      // cot of the angle at k, opposite edge (i, j)
      const Eigen::Vector3d ei = corner(V, i) - corner(V, k);
      const Eigen::Vector3d ej = corner(V, j) - corner(V, k);
      const double half_cot = 0.5 * ei.dot(ej) / (2.0 * area);
      g.emplace_back(i, j, -half_cot);
      g.emplace_back(j, i, -half_cot);
      g.emplace_back(i, i, half_cot);
      g.emplace_back(j, j, half_cot);
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (!(fem.c_diag[i] > 0.0)) {
      throw InputError("assemble_fem: vertex " + std::to_string(i) + " belongs to no triangle");
    }
  }
  fem.G.resize(n, n);
  fem.G.setFromTriplets(g.begin(), g.end());
  fem.C = SparseMatrix(n, n);
  fem.C.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Index i = 0; i < n; ++i) fem.C.insert(i, i) = fem.c_diag[i];
  fem.C.makeCompressed();
  const Vector c_inv = fem.c_diag.cwiseInverse();
  fem.GCinvG = fem.G * c_inv.asDiagonal() * fem.G;
  fem.GCinvG = SparseMatrix(0.5 * (fem.GCinvG + SparseMatrix(fem.GCinvG.transpose())));
  fem.G.makeCompressed();
  fem.GCinvG.makeCompressed();
  return fem;
}

Projector::Projector(RowSparseMatrix psi) : psi_(std::move(psi)) {
  psi_.makeCompressed();
  identity_ = psi_.rows() == psi_.cols() && psi_.nonZeros() == psi_.rows();
  if (identity_) {
    for (Index r = 0; r < psi_.rows() && identity_; ++r) {
      RowSparseMatrix::InnerIterator it(psi_, r);
      identity_ = it && it.col() == r && it.value() == 1.0;
    }
  }
}

Projector Projector::identity(Index n) {
  RowSparseMatrix eye(n, n);
  eye.setIdentity();
  return Projector(std::move(eye));
}

SparseMatrix Projector::expand(Index tasks) const {
  const Index N = num_locations(), n = num_vertices();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(psi_.nonZeros() * tasks));
  for (Index k = 0; k < tasks; ++k) {
    for (Index r = 0; r < N; ++r) {
      for (RowSparseMatrix::InnerIterator it(psi_, r); it; ++it) {
        trip.emplace_back(static_cast<int>(k * N + r), static_cast<int>(k * n + it.col()), it.value());
      }
    }
  }
  SparseMatrix out(N * tasks, n * tasks);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Vector Projector::apply(const Eigen::Ref<const Vector>& w) const {
  if (w.size() != num_vertices()) throw DimensionError("Projector::apply: field size mismatch");
  if (identity_) return w;
  return psi_ * w;
}

namespace {

// Closest point on triangle abc to p, returned as barycentric weights.
Eigen::Vector3d closest_barycentric(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                    const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

// Uniform bucket grid over triangle bounding boxes.
class TriangleGrid {
 public:
  TriangleGrid(const TriangularMesh& mesh, double pad) : mesh_(mesh) {
    const auto& V = mesh.vertices();
    lo_ = V.colwise().minCoeff().transpose().array() - pad;
    hi_ = V.colwise().maxCoeff().transpose().array() + pad;
    double edge_sum = 0.0;
    const auto& F = mesh.triangles();
    for (Index t = 0; t < F.rows(); ++t) edge_sum += (V.row(F(t, 0)) - V.row(F(t, 1))).norm();
    cell_ = std::max(edge_sum / std::max<Index>(1, F.rows()), 1e-9);
    for (int d = 0; d < 3; ++d) {
      dims_[d] = std::clamp(static_cast<long>(std::ceil((hi_[d] - lo_[d]) / cell_)), 1L, 4096L);
    }
    for (Index t = 0; t < F.rows(); ++t) {
      Eigen::Array3d tlo = V.row(F(t, 0)).transpose().array(), thi = tlo;
      for (int c = 1; c < 3; ++c) {
        tlo = tlo.min(V.row(F(t, c)).transpose().array());
        thi = thi.max(V.row(F(t, c)).transpose().array());
      }
      const auto a = cell_of(tlo - pad), b = cell_of(thi + pad);
      for (long x = a[0]; x <= b[0]; ++x)
        for (long y = a[1]; y <= b[1]; ++y)
          for (long z = a[2]; z <= b[2]; ++z) buckets_[key(x, y, z)].push_back(static_cast<int>(t));
    }
  }

  const std::vector<int>* candidates(const Eigen::Vector3d& p) const {
    const auto c = cell_of(p.array());
    auto it = buckets_.find(key(c[0], c[1], c[2]));
    return it == buckets_.end() ? nullptr : &it->second;
  }

 private:
  std::array<long, 3> cell_of(const Eigen::Array3d& p) const {
    std::array<long, 3> c{};
    for (int d = 0; d < 3; ++d) {
      c[d] = std::clamp(static_cast<long>(std::floor((p[d] - lo_[d]) / cell_)), 0L, dims_[d] - 1);
    }
    return c;
  }
  long key(long x, long y, long z) const { return (x * dims_[1] + y) * dims_[2] + z; }

  const TriangularMesh& mesh_;
  Eigen::Array3d lo_, hi_;
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::unordered_map<long, std::vector<int>> buckets_;
};

}  // namespace

Projector build_projector(const TriangularMesh& mesh, const Eigen::MatrixX3d& locations,
                          const ProjectorOptions& options) {
  const auto& V = mesh.vertices();
  const auto& F = mesh.triangles();
  const TriangleGrid grid(mesh, options.tolerance);
  std::vector<Triplet> trip;
  std::vector<Index> offending;
  for (Index r = 0; r < locations.rows(); ++r) {
    const Eigen::Vector3d p = locations.row(r).transpose();
    double best = std::numeric_limits<double>::infinity();
    int best_t = -1;
    Eigen::Vector3d best_w;
    if (const auto* cand = grid.candidates(p)) {
      for (int t : *cand) {
        const Eigen::Vector3d a = corner(V, F(t, 0)), b = corner(V, F(t, 1)), c = corner(V, F(t, 2));
        const Eigen::Vector3d w = closest_barycentric(p, a, b, c);
        const double d = (w[0] * a + w[1] * b + w[2] * c - p).norm();
        if (d < best) {
          best = d;
          best_t = t;
          best_w = w;
        }
      }
    }
    if (best_t < 0 || best > options.tolerance) {
      offending.push_back(r);
      continue;
    }
    // Snap tiny weights so vertex hits give exact unit rows.
    for (int c = 0; c < 3; ++c) {
      if (std::abs(best_w[c]) < 1e-12) best_w[c] = 0.0;
    }
    best_w /= best_w.sum();
    for (int c = 0; c < 3; ++c) {
      if (best_w[c] > 0.0) trip.emplace_back(static_cast<int>(r), F(best_t, c), best_w[c]);
    }
  }
  if (!offending.empty()) {
    std::ostringstream msg;
    msg << "build_projector: " << offending.size() << " location(s) farther than " << options.tolerance
        << " mm from the surface:";
    for (std::size_t i = 0; i < std::min<std::size_t>(offending.size(), 20); ++i) msg << ' ' << offending[i];
    if (offending.size() > 20) msg << " ...";
    throw InputError(msg.str());
  }
  RowSparseMatrix psi(locations.rows(), mesh.n());
  psi.setFromTriplets(trip.begin(), trip.end());
  return Projector(std::move(psi));
}

Adjacency edge_adjacency(const TriangularMesh& mesh) {
  Adjacency adj(static_cast<std::size_t>(mesh.n()));
  const auto& V = mesh.vertices();
  for (const auto& [a, b] : mesh.edges()) {
    const double len = (V.row(a) - V.row(b)).norm();
    adj[a].emplace_back(b, len);
    adj[b].emplace_back(a, len);
  }
  return adj;
}

std::vector<std::pair<int, double>> edge_distances(const Adjacency& adjacency, int source, double max_distance) {
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  std::unordered_map<int, double> dist;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  std::vector<std::pair<int, double>> out;
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    out.emplace_back(v, d);
    for (const auto& [u, len] : adjacency[v]) {
      const double nd = d + len;
      if (nd > max_distance) continue;
      auto it = dist.find(u);
      if (it == dist.end() || nd < it->second) {
        dist[u] = nd;
        heap.emplace(nd, u);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace io {

TriangularMesh read_mesh(std::istream& in) {
  Index n = 0, m = 0;
  if (!(in >> n >> m) || n < 0 || m < 0) throw InputError("read_mesh: bad header, expected \"n m\"");
  Eigen::MatrixX3d v(n, 3);
  for (Index i = 0; i < n; ++i) {
    if (!(in >> v(i, 0) >> v(i, 1) >> v(i, 2))) {
      throw InputError("read_mesh: truncated vertex block at vertex " + std::to_string(i));
    }
  }
  Eigen::MatrixX3i f(m, 3);
  for (Index t = 0; t < m; ++t) {
    if (!(in >> f(t, 0) >> f(t, 1) >> f(t, 2))) {
      throw InputError("read_mesh: truncated triangle block at triangle " + std::to_string(t));
    }
  }
  return TriangularMesh(std::move(v), std::move(f));
}

TriangularMesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("read_mesh: cannot open " + path);
  return read_mesh(in);
}

void write_mesh(std::ostream& out, const TriangularMesh& mesh) {
  out << mesh.n() << ' ' << mesh.num_triangles() << '\n' << std::setprecision(17);
  for (Index i = 0; i < mesh.n(); ++i) {
    out << mesh.vertices()(i, 0) << ' ' << mesh.vertices()(i, 1) << ' ' << mesh.vertices()(i, 2) << '\n';
  }
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    out << mesh.triangles()(t, 0) << ' ' << mesh.triangles()(t, 1) << ' ' << mesh.triangles()(t, 2) << '\n';
  }
}

void write_mesh(const std::string& path, const TriangularMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw InputError("write_mesh: cannot open " + path);
  write_mesh(out, mesh);
}

SparseMatrix read_triplets(std::istream& in) {
  Index rows = 0, cols = 0, nnz = 0;
  if (!(in >> rows >> cols >> nnz)) throw InputError("read_triplets: bad header, expected \"rows cols nnz\"");
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(nnz));
  for (Index e = 0; e < nnz; ++e) {
    int r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v)) throw InputError("read_triplets: truncated at entry " + std::to_string(e));
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw InputError("read_triplets: entry " + std::to_string(e) + " out of range");
    }
    trip.emplace_back(r, c, v);
  }
  SparseMatrix m(rows, cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

SparseMatrix read_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("read_triplets: cannot open " + path);
  return read_triplets(in);
}

void write_triplets(std::ostream& out, const SparseMatrix& m) {
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n' << std::setprecision(17);
  for (Index c = 0; c < m.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

void write_triplets(const std::string& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw InputError("write_triplets: cannot open " + path);
  write_triplets(out, m);
}

}  // namespace io

}  // namespace sbglm
