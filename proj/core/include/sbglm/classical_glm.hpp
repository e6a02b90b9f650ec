#pragma once

#include <sbglm/preprocess.hpp>
#include <sbglm/types.hpp>

#include <vector>

namespace sbglm {

using ActivationMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-location least-squares fit. Rows are data locations, columns tasks.
struct ClassicalFit {
  Matrix beta;                 ///< N x K, percent signal change
  Matrix se;                   ///< N x K standard errors
  Vector resid_var;            ///< N, denominator T - K
  std::vector<bool> rank_deficient;
  Index dof = 0;               ///< T - K

  Index locations() const { return beta.rows(); }
  Index tasks() const { return beta.cols(); }
  /// Mean residual variance over full-rank locations.
  double mean_residual_variance() const;
};

/// OLS per location. Several runs are stacked in time. Rank-deficient
/// locations are flagged and given NaN estimates.
ClassicalFit fit_classical(const SessionData& data);
ClassicalFit fit_classical(const std::vector<SessionData>& runs);

enum class Correction { None, Bonferroni };

/// One-sided t-test of beta > gamma at level alpha (alpha / (N K) with
/// Bonferroni). Rank-deficient locations are never active.
ActivationMask activation_ttest(const ClassicalFit& fit, double gamma, double alpha,
                                Correction correction = Correction::None);

}  // namespace sbglm
