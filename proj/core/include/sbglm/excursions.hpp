#pragma once

#include <sbglm/classical_glm.hpp>
#include <sbglm/em_engine.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/types.hpp>

#include <cstdint>
#include <vector>

namespace sbglm {

struct ExcursionOptions {
  double alpha = 0.01;
  Index samples = 10000;
  std::uint64_t seed = 1;
  int threads = 0;
};

/// Joint excursion set of the projected field Psi w above gamma, per task.
struct ExcursionResult {
  double gamma = 0.0;
  double alpha = 0.01;
  Index samples = 0;
  ActivationMask active;          ///< N x K
  Matrix marginal_prob;           ///< N x K, P(beta_v > gamma)
  std::vector<double> joint_prob; ///< per task, Monte-Carlo joint probability of the returned set
};

/// Excursion sets for several thresholds, returned in the order given. Each
/// task is handled separately: locations are sorted by decreasing marginal
/// probability and the longest prefix whose joint probability is at least
/// 1 - alpha is kept. Higher thresholds are solved first and their sets lead
/// the ordering at lower thresholds, so the sets are nested.
std::vector<ExcursionResult> excursion_sets(const PosteriorField& post, const Projector& projector,
                                            const std::vector<double>& gammas, const ExcursionOptions& options = {});

ExcursionResult excursion_set(const PosteriorField& post, const Projector& projector, double gamma,
                              const ExcursionOptions& options = {});

/// Same construction from stored draws of the projected field: `draws` is
/// (N K) x S, task-major rows; marginals are the empirical exceedance
/// fractions.
std::vector<ExcursionResult> excursion_sets_from_draws(const Matrix& draws, Index tasks,
                                                       const std::vector<double>& gammas, double alpha);

/// Exact Gaussian marginal means and standard deviations of Psi w (N x K each).
void projected_marginals(const PosteriorField& post, const Projector& projector, Matrix& mean, Matrix& sd);

}  // namespace sbglm
