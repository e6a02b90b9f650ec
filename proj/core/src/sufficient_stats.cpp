#include <sbglm/sufficient_stats.hpp>

#include <sbglm/error.hpp>

namespace sbglm {

SufficientStats compute_sufficient_stats(const SessionData& data, const Projector& projector) {
  data.validate();
  const Index N = data.locations(), K = data.tasks();
  if (projector.num_locations() != N) {
    throw DimensionError("sufficient stats: projector has " + std::to_string(projector.num_locations()) +
                         " rows but data has " + std::to_string(N) + " locations");
  }
  const Index n = projector.num_vertices();
  const RowSparseMatrix& psi = projector.matrix();

  SufficientStats s;
  s.n = n;
  s.tasks = K;
  s.xty = Vector::Zero(n * K);
  s.yty = data.y.squaredNorm();
  s.tn = static_cast<double>(data.timepoints() * N);

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(N * K * K * 3));
  Matrix xtx_shared;
  if (data.x.is_shared()) xtx_shared = data.x.at(0).transpose() * data.x.at(0);
  std::vector<std::pair<int, double>> row;
  for (Index v = 0; v < N; ++v) {
    const Matrix& xv = data.x.at(v);
    const Matrix xtx = data.x.is_shared() ? xtx_shared : Matrix(xv.transpose() * xv);
    const Vector xty = xv.transpose() * data.y.col(v);
    row.clear();
    for (RowSparseMatrix::InnerIterator it(psi, v); it; ++it) row.emplace_back(static_cast<int>(it.col()), it.value());
    for (Index k = 0; k < K; ++k) {
      for (const auto& [a, pa] : row) s.xty[k * n + a] += xty[k] * pa;
      for (Index l = 0; l < K; ++l) {
        const double x = xtx(k, l);
        for (const auto& [a, pa] : row) {
          for (const auto& [b, pb] : row) {
            trip.emplace_back(static_cast<int>(k * n + a), static_cast<int>(l * n + b), x * pa * pb);
          }
        }
      }
    }
  }
  s.xtx.resize(n * K, n * K);
  s.xtx.setFromTriplets(trip.begin(), trip.end());
  s.xtx.makeCompressed();
  return s;
}

SufficientStats pool(const std::vector<SufficientStats>& parts) {
  if (parts.empty()) throw DimensionError("pool: no sufficient statistics given");
  SufficientStats out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.n != out.n || p.tasks != out.tasks) {
      throw DimensionError("pool: part " + std::to_string(i) + " differs in mesh size or task count");
    }
    out.xtx += p.xtx;
    out.xty += p.xty;
    out.yty += p.yty;
    out.tn += p.tn;
  }
  out.xtx.makeCompressed();
  return out;
}

}  // namespace sbglm
