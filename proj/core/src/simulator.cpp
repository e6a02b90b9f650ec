#include <sbglm/simulator.hpp>

#include <sbglm/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>

namespace sbglm {

namespace {

std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed ^ (tag * 0x9e3779b97f4a7c15ULL);
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum StreamTag : std::uint64_t { kBumps = 1, kSubject = 1000, kRun = 1000000 };

TriangularMesh concatenate(const std::vector<TriangularMesh>& parts) {
  Index nv = 0, nt = 0;
  for (const auto& p : parts) {
    nv += p.n();
    nt += p.num_triangles();
  }
  Eigen::MatrixX3d v(nv, 3);
  Eigen::MatrixX3i t(nt, 3);
  Index ov = 0, ot = 0;
  for (const auto& p : parts) {
    v.middleRows(ov, p.n()) = p.vertices();
    t.middleRows(ot, p.num_triangles()) = p.triangles().array() + static_cast<int>(ov);
    ov += p.n();
    ot += p.num_triangles();
  }
  return TriangularMesh(std::move(v), std::move(t));
}

}  // namespace

void SimConfig::validate() const {
  if (n_vertices < 4) throw DomainError("SimConfig: n_vertices must be at least 4");
  if (hemispheres < 1) throw DomainError("SimConfig: hemispheres must be positive");
  if (tasks < 1 || timepoints < 1) throw DomainError("SimConfig: tasks and timepoints must be positive");
  if (timepoints <= tasks) throw DomainError("SimConfig: timepoints must exceed tasks");
  if (!(amplitude > 0.0)) throw DomainError("SimConfig: amplitude must be positive");
  if (!(spacing_mm > 0.0) || !(bump_radius_mm > 0.0) || !(tr > 0.0) || !(block_length_s > 0.0)) {
    throw DomainError("SimConfig: spacing, bump radius, TR and block length must be positive");
  }
  if (!(bump_power > 0.0) || bumps_per_task < 1) throw DomainError("SimConfig: bump power and count must be positive");
  if (error_variance < 0.0 || subject_var < 0.0 || session_var < 0.0 || run_var < 0.0) {
    throw DomainError("SimConfig: variances must be nonnegative");
  }
  if (subjects < 1 || sessions < 1 || runs < 1) throw DomainError("SimConfig: counts must be positive");
  if (baseline < 0.0) throw DomainError("SimConfig: baseline must be nonnegative");
  if (ar_coefficients.size() > 0 && !is_stationary(ar_coefficients)) {
    throw DomainError("SimConfig: AR coefficients are not stationary");
  }
  hrf.validate();
}

TriangularMesh grid_mesh(Index rows, Index cols, double spacing_mm) {
  if (rows < 2 || cols < 2) throw DomainError("grid_mesh: need at least 2 x 2 vertices");
  Eigen::MatrixX3d v(rows * cols, 3);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) v.row(r * cols + c) << static_cast<double>(c) * spacing_mm,
        static_cast<double>(r) * spacing_mm, 0.0;
  }
  Eigen::MatrixX3i t(2 * (rows - 1) * (cols - 1), 3);
  Index i = 0;
  for (Index r = 0; r + 1 < rows; ++r) {
    for (Index c = 0; c + 1 < cols; ++c) {
      const int a = static_cast<int>(r * cols + c), b = a + 1;
      const int d = static_cast<int>((r + 1) * cols + c), e = d + 1;
      t.row(i++) << a, b, e;
      t.row(i++) << a, e, d;
    }
  }
  return TriangularMesh(std::move(v), std::move(t));
}

TriangularMesh grid_mesh(Index n_target, double spacing_mm) {
  const Index cols = std::max<Index>(2, static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n_target)))));
  const Index rows = std::max<Index>(2, static_cast<Index>(std::llround(static_cast<double>(n_target) / cols)));
  return grid_mesh(rows, cols, spacing_mm);
}

TriangularMesh icosphere(int levels, double radius_mm) {
  if (levels < 0) throw DomainError("icosphere: levels must be nonnegative");
  if (!(radius_mm > 0.0)) throw DomainError("icosphere: radius must be positive");
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {{-1, g, 0}, {1, g, 0},  {-1, -g, 0}, {1, -g, 0}, {0, -1, g},  {0, 1, g},
                                    {0, -1, -g}, {0, 1, -g}, {g, 0, -1},  {g, 0, 1},  {-g, 0, -1}, {-g, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < levels; ++level) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  Eigen::MatrixX3d vm(static_cast<Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) vm.row(static_cast<Index>(i)) = radius_mm * v[i].transpose();
  Eigen::MatrixX3i tm(static_cast<Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) tm.row(static_cast<Index>(i)) << f[i][0], f[i][1], f[i][2];
  return TriangularMesh(std::move(vm), std::move(tm));
}

Matrix block_design(Index timepoints, Index tasks, double tr, double block_length_s, std::uint64_t seed) {
  const Index len = std::max<Index>(1, static_cast<Index>(std::llround(block_length_s / tr)));
  const Index blocks = (timepoints + len - 1) / len;
  const Index on_blocks = blocks / 2;  // rest blocks alternate with task blocks
  if (on_blocks < tasks) {
    throw DomainError("block_design: " + std::to_string(on_blocks) + " task blocks cannot cover " +
                      std::to_string(tasks) + " tasks");
  }
  std::mt19937_64 rng(seed);
  std::vector<Index> label(static_cast<std::size_t>(on_blocks));
  std::uniform_int_distribution<Index> pick(0, tasks - 1);
  for (Index b = 0; b < on_blocks; ++b) label[b] = b < tasks ? b : pick(rng);
  std::shuffle(label.begin(), label.end(), rng);
  Matrix stim = Matrix::Zero(timepoints, tasks);
  for (Index b = 0; b < on_blocks; ++b) {
    const Index start = (2 * b + 1) * len;
    for (Index t = start; t < std::min(timepoints, start + len); ++t) stim(t, label[b]) = 1.0;
  }
  for (Index k = 0; k < tasks; ++k) {
    if (stim.col(k).sum() == 0.0) throw DomainError("block_design: task " + std::to_string(k) + " has no block");
  }
  return stim;
}

Matrix ar_noise(Index timepoints, Index locations, const Vector& coefficients, double marginal_variance,
                std::uint64_t seed) {
  if (marginal_variance < 0.0) throw DomainError("ar_noise: variance must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix e(timepoints, locations);
  const Index p = coefficients.size();
  if (p == 0) {
    const double sd = std::sqrt(marginal_variance);
    for (Index v = 0; v < locations; ++v) {
      for (Index t = 0; t < timepoints; ++t) e(t, v) = sd * normal(rng);
    }
    return e;
  }
  if (!is_stationary(coefficients)) throw DomainError("ar_noise: coefficients are not stationary");
  const double unit_var = ar_autocovariance(coefficients, 1.0, 0)[0];
  const double sd = std::sqrt(marginal_variance / unit_var);
  const Index burn = 200 + 20 * p;
  Vector x(burn + timepoints);
  for (Index v = 0; v < locations; ++v) {
    for (Index t = 0; t < x.size(); ++t) {
      double s = sd * normal(rng);
      for (Index i = 0; i < p && i < t; ++i) s += coefficients[i] * x[t - 1 - i];
      x[t] = s;
    }
    e.col(v) = x.tail(timepoints);
  }
  return e;
}

Simulation simulate(const SimConfig& config) {
  config.validate();
  Simulation sim;

  // mesh
  std::vector<TriangularMesh> hemis;
  TriangularMesh base;
  if (config.mesh == MeshKind::Grid) {
    base = grid_mesh(config.n_vertices, config.spacing_mm);
  } else {
    int level = 0;
    while (10 * (Index{1} << (2 * (level + 1))) + 2 <= config.n_vertices) ++level;
    const Index below = 10 * (Index{1} << (2 * level)) + 2, above = 10 * (Index{1} << (2 * (level + 1))) + 2;
    if (above - config.n_vertices < config.n_vertices - below) ++level;
    const double radius = config.spacing_mm * std::pow(2.0, level) / 1.0514622;
    base = icosphere(level, radius);
  }
  const double extent = base.vertices().col(0).maxCoeff() - base.vertices().col(0).minCoeff();
  for (int h = 0; h < config.hemispheres; ++h) {
    Eigen::MatrixX3d v = base.vertices();
    v.col(0).array() += static_cast<double>(h) * (extent + 10.0 * config.spacing_mm);
    hemis.emplace_back(std::move(v), base.triangles());
  }
  sim.mesh = config.hemispheres == 1 ? base : concatenate(hemis);
  const Index n = sim.mesh.n(), K = config.tasks, nb = base.n();
  const Eigen::MatrixX3d& V = sim.mesh.vertices();

  // bump centres: non-overlapping within a task; on a grid the whole disc lies inside
  const double R = config.bump_radius_mm;
  const Eigen::Vector3d lo = base.vertices().colwise().minCoeff(), hi = base.vertices().colwise().maxCoeff();
  std::mt19937_64 bump_rng(substream(config.seed, kBumps));
  std::uniform_int_distribution<Index> pick(0, nb - 1);
  const int per_task = config.bumps_per_task * config.hemispheres;
  std::vector<std::vector<Index>> centers(static_cast<std::size_t>(K));
  sim.truth.bump_centers.resize(K * per_task, 3);
  for (Index k = 0; k < K; ++k) {
    for (int h = 0; h < config.hemispheres; ++h) {
      for (int b = 0; b < config.bumps_per_task; ++b) {
        bool placed = false;
        for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
          const Index c = pick(bump_rng);
          const Eigen::Vector3d p = base.vertices().row(c).transpose();
          if (config.mesh == MeshKind::Grid) {
            if (p.x() - lo.x() < R || hi.x() - p.x() < R || p.y() - lo.y() < R || hi.y() - p.y() < R) continue;
          }
          const Index global = h * nb + c;
          bool clear = true;
          for (Index other : centers[k]) {
            if ((V.row(other) - V.row(global)).norm() < 2.0 * R) clear = false;
          }
          if (!clear) continue;
          centers[k].push_back(global);
          placed = true;
        }
        if (!placed) {
          throw DomainError("simulate: mesh too small for " + std::to_string(config.bumps_per_task) +
                            " bumps of radius " + std::to_string(R) + " mm per task");
        }
      }
    }
    for (int b = 0; b < per_task; ++b) sim.truth.bump_centers.row(k * per_task + b) = V.row(centers[k][b]);
  }

  // field for given per-bump amplitudes
  auto field = [&](const Matrix& amp) {
    Matrix beta = Matrix::Zero(n, K);
    for (Index k = 0; k < K; ++k) {
      for (int b = 0; b < per_task; ++b) {
        const Eigen::RowVector3d c = V.row(centers[k][b]);
        for (Index v = 0; v < n; ++v) {
          const double r2 = (V.row(v) - c).squaredNorm() / (R * R);
          if (r2 < 1.0) beta(v, k) += amp(k, b) * std::pow(1.0 - r2, config.bump_power);
        }
      }
    }
    return beta;
  };
  const Matrix amp0 = Matrix::Constant(K, per_task, config.amplitude);
  sim.truth.beta = field(amp0);
  sim.truth.mask = sim.truth.beta.array() != 0.0;

  HrfParams hrf = config.hrf;
  hrf.tr = config.tr;
  const bool white = config.ar_coefficients.size() == 0;
  std::uint64_t run_counter = 0;
  for (int s = 0; s < config.subjects; ++s) {
    std::mt19937_64 srng(substream(config.seed, kSubject + static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> normal;
    Matrix amp_s = amp0;
    for (Index i = 0; i < amp_s.size(); ++i) amp_s.data()[i] *= 1.0 + std::sqrt(config.subject_var) * normal(srng);
    sim.truth.subject_beta.push_back(field(amp_s));
    for (int ses = 0; ses < config.sessions; ++ses) {
      Matrix amp_ses = amp_s;
      for (Index i = 0; i < amp_ses.size(); ++i) {
        amp_ses.data()[i] *= 1.0 + std::sqrt(config.session_var) * normal(srng);
      }
      for (int r = 0; r < config.runs; ++r) {
        Matrix amp_r = amp_ses;
        for (Index i = 0; i < amp_r.size(); ++i) amp_r.data()[i] *= 1.0 + std::sqrt(config.run_var) * normal(srng);
        const Matrix beta = field(amp_r);
        const std::uint64_t rs = substream(config.seed, kRun + run_counter++);
        const Matrix stim = block_design(config.timepoints, K, config.tr, config.block_length_s, substream(rs, 1));
        const Matrix x = convolve_and_scale(stim, hrf);
        Matrix y = x * beta.transpose();
        if (config.error_variance > 0.0) {
          y += ar_noise(config.timepoints, n, config.ar_coefficients, config.error_variance, substream(rs, 2));
        }
        if (config.baseline > 0.0) y = (config.baseline * (1.0 + y.array() / 100.0)).matrix();

        SessionData data;
        data.y = std::move(y);
        data.x = Design(x);
        data.z = Matrix(config.timepoints, 0);
        data.tr = config.tr;
        data.whitened = white && config.baseline == 0.0;
        sim.runs.push_back(std::move(data));
        sim.stimulus.push_back(stim);
        sim.truth.run_beta.push_back(beta);
        sim.truth.run_index.push_back({s, ses, r});
      }
    }
  }
  return sim;
}

double rmse(const Matrix& estimate, const Matrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw DimensionError("rmse: estimate is " + std::to_string(estimate.rows()) + " x " +
                         std::to_string(estimate.cols()) + ", truth is " + std::to_string(truth.rows()) + " x " +
                         std::to_string(truth.cols()));
  }
  if (truth.size() == 0) return 0.0;
  return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(truth.size()));
}

Scores score(const Matrix& estimate, const Matrix& truth, const ActivationMask* active, const ActivationMask* mask,
             const Vector* area, double seconds) {
  Scores s;
  s.rmse = rmse(estimate, truth);
  s.seconds = seconds;
  if (active && mask) {
    const Index N = truth.rows(), K = truth.cols();
    if (active->rows() != N || active->cols() != K || mask->rows() != N || mask->cols() != K) {
      throw DimensionError("score: activation masks do not match the estimate");
    }
    if (area && area->size() != N) throw DimensionError("score: area weights do not match the locations");
    double tp = 0.0, fp = 0.0, pos = 0.0, neg = 0.0;
    for (Index k = 0; k < K; ++k) {
      for (Index v = 0; v < N; ++v) {
        const double w = area ? (*area)[v] : 1.0;
        if ((*mask)(v, k)) {
          pos += w;
          if ((*active)(v, k)) tp += w;
        } else {
          neg += w;
          if ((*active)(v, k)) fp += w;
        }
      }
    }
    s.tpr = pos > 0.0 ? tp / pos : 0.0;
    s.fpr = neg > 0.0 ? fp / neg : 0.0;
    s.fdr = tp + fp > 0.0 ? fp / (tp + fp) : 0.0;
  }
  return s;
}

}  // namespace sbglm
