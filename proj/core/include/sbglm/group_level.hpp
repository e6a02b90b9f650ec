#pragma once

#include <sbglm/em_engine.hpp>
#include <sbglm/excursions.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/spde_prior.hpp>
#include <sbglm/sufficient_stats.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace sbglm {

struct SubjectSummary {
  std::string name;
  SufficientStats stats;
  Hyperparameters theta;
  double weight = 0.0;  ///< 0 selects the subject's observation count TN
};

struct GroupOptions {
  Index draws = 200;
  std::uint64_t seed = 1;
  int threads = 0;
  std::vector<double> gammas{0.0, 0.5, 1.0};
  double alpha = 0.01;
  bool excursions = true;
};

struct GroupResult {
  Hyperparameters theta_mean;           ///< exp of the weighted mean of log Theta
  Vector log_theta_mean;                ///< packed [kappa2, phi, sigma2] on the log scale
  Vector log_theta_variance;            ///< weighted between-subject variance
  Vector log_theta_draw_sd;             ///< spread used for the Theta_G draws
  std::vector<double> weights;          ///< normalized subject weights
  std::vector<Hyperparameters> theta_draws;
  Vector posterior_mean;                ///< nK mesh field at theta_mean
  Matrix beta_draws;                    ///< (N K) x S projected group fields
  std::vector<ExcursionResult> excursions;
};

/// Pools subject statistics (scaled by weight / max weight), averages log
/// Theta with the weights and draws S group fields, each at its own Theta_G
/// draw. Theta_G components are independent normals on the log scale with
/// variance s^2 / M, where s^2 is the weighted between-subject variance.
GroupResult combine_subjects(const std::vector<SubjectSummary>& subjects, const SpdeStructure& spde,
                             const Projector& projector, const GroupOptions& options = {});

}  // namespace sbglm
