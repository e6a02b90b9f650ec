#pragma once

#include <sbglm/classical_glm.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/preprocess.hpp>
#include <sbglm/types.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace sbglm {

enum class MeshKind { Grid, Icosphere };

struct SimConfig {
  MeshKind mesh = MeshKind::Grid;
  Index n_vertices = 2000;      ///< per hemisphere; the grid rounds to rows x cols
  int hemispheres = 1;
  double spacing_mm = 2.0;      ///< grid spacing, or target edge length on the sphere
  Index tasks = 2;
  Index timepoints = 300;
  double tr = 1.0;
  double amplitude = 2.0;       ///< bump peak, percent signal change
  double bump_radius_mm = 16.0;
  double bump_power = 3.0;      ///< profile (1 - r^2/R^2)^p
  int bumps_per_task = 2;
  double error_variance = 1.0;  ///< marginal variance of the noise
  Vector ar_coefficients;       ///< empty for white noise
  int subjects = 1;
  int sessions = 1;
  int runs = 1;
  double subject_var = 0.0;     ///< variances of multiplicative bump-amplitude effects
  double session_var = 0.0;
  double run_var = 0.0;
  double block_length_s = 15.0;
  double baseline = 0.0;        ///< > 0 emits raw BOLD around this mean
  HrfParams hrf;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RunIndex {
  int subject = 0;
  int session = 0;
  int run = 0;
};

struct SimTruth {
  Matrix beta;                     ///< n x K group truth
  ActivationMask mask;             ///< n x K, beta != 0
  std::vector<Matrix> subject_beta;
  std::vector<Matrix> run_beta;    ///< per run, aligned with `run_index`
  std::vector<RunIndex> run_index;
  Matrix bump_centers;             ///< (K * bumps) x 3
};

struct Simulation {
  TriangularMesh mesh;
  std::vector<SessionData> runs;
  std::vector<Matrix> stimulus;    ///< T x K indicators per run
  SimTruth truth;
};

/// Flat grid with about n vertices (rows x cols) and the given spacing.
TriangularMesh grid_mesh(Index n_target, double spacing_mm);
TriangularMesh grid_mesh(Index rows, Index cols, double spacing_mm);
/// Subdivided icosahedron with the given number of subdivision levels.
TriangularMesh icosphere(int levels, double radius_mm);

/// Randomized block design: consecutive blocks are assigned one of K tasks or
/// rest, with every task appearing at least once.
Matrix block_design(Index timepoints, Index tasks, double tr, double block_length_s, std::uint64_t seed);

/// Stationary AR noise with the given marginal variance (T x N).
Matrix ar_noise(Index timepoints, Index locations, const Vector& coefficients, double marginal_variance,
                std::uint64_t seed);

Simulation simulate(const SimConfig& config);

struct Scores {
  double rmse = 0.0;
  double tpr = 0.0;       ///< fraction of the true region detected
  double fpr = 0.0;       ///< fraction of the inactive region flagged
  double fdr = 0.0;       ///< fraction of the flagged region that is inactive
  double seconds = 0.0;
};

/// RMSE over all entries.
double rmse(const Matrix& estimate, const Matrix& truth);

/// Scores an estimate (and optional activation set) against the truth. The
/// rates are area-weighted when `area` (per-location weights) is given.
Scores score(const Matrix& estimate, const Matrix& truth, const ActivationMask* active = nullptr,
             const ActivationMask* mask = nullptr, const Vector* area = nullptr, double seconds = 0.0);

}  // namespace sbglm
