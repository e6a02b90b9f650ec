#pragma once

#include <sbglm/classical_glm.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/preprocess.hpp>
#include <sbglm/sparse_cholesky.hpp>
#include <sbglm/spde_prior.hpp>
#include <sbglm/sufficient_stats.hpp>
#include <sbglm/types.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace sbglm {

/// Tr(A E(w_k w_k')) for A in {C, G, G C^-1 G}.
struct TaskMoments {
  double c = 0.0;
  double g = 0.0;
  double gcg = 0.0;

  /// Tr(Q~(kappa2) E(w_k w_k')).
  double qtilde(double kappa2) const { return kappa2 * c + 2.0 * g + gcg / kappa2; }
};

/// Options for the traces Tr(A Sigma). The default uses the selected inverse;
/// the stochastic estimator averages z' A Sigma z over Rademacher probes.
struct TraceOptions {
  bool hutchinson = false;
  int probes = 64;
  std::uint64_t seed = 1;
};

/// Gaussian posterior of w given y and Theta.
struct PosteriorField {
  Index n = 0;
  Index tasks = 0;
  Hyperparameters theta;
  Vector mu;                     ///< nK posterior mean
  SparseMatrix precision;        ///< Q + X'X / sigma^2 (full storage)
  SelectedInverse selected_cov;  ///< empty in stochastic-trace mode
  std::shared_ptr<const SparseCholesky> factor;
  double log_det_precision = 0.0;
  std::vector<TaskMoments> moments;
  double trace_xtx = 0.0;        ///< Tr(X'X E(ww'))

  Vector task_mean(Index k) const { return mu.segment(k * n, n); }
  bool has_selected_cov() const { return selected_cov.rows() > 0; }
};

/// Posterior precision on a pattern fixed once per (stats, mesh) pair; each
/// new Theta is a value update followed by a numeric refactorization.
/// Not safe for concurrent use; create one per worker.
class PosteriorSystem {
 public:
  PosteriorSystem(const SufficientStats& stats, const SpdeStructure& spde);

  Index n() const { return stats_->n; }
  Index tasks() const { return stats_->tasks; }
  const SufficientStats& stats() const { return *stats_; }
  const SpdeStructure& spde() const { return *spde_; }
  const SparseMatrix& pattern() const { return pattern_; }

  void assemble(const Hyperparameters& theta, SparseMatrix& out) const;
  SparseMatrix assemble(const Hyperparameters& theta) const;

  /// Factorizes the posterior precision at theta. With `moments`, also
  /// computes the traces the M-step needs.
  PosteriorField posterior(const Hyperparameters& theta, bool moments = true, const TraceOptions& traces = {});

  /// log|Q(theta)|.
  double log_det_prior(const Hyperparameters& theta);

  /// log p(y | theta) with w integrated out; `post` must be at theta.
  double log_likelihood(const PosteriorField& post);
  /// Convenience: factorizes at theta without computing traces.
  double log_likelihood(const Hyperparameters& theta);

 private:
  const SufficientStats* stats_;
  const SpdeStructure* spde_;
  SparseMatrix pattern_;
  std::vector<int> block_;
  Vector c_, g_, gcg_, xtx_;
  std::shared_ptr<SparseCholesky> chol_;
  std::unique_ptr<QtildeFactor> prior_factor_;
};

/// E-step: posterior mean, precision, selected covariance and trace moments.
/// Throws `NumericalError` with the hyperparameters when the precision is
/// not positive definite.
PosteriorField e_step(const SufficientStats& stats, const Hyperparameters& theta, const SpdeStructure& spde,
                      const TraceOptions& traces = {});

/// sigma^2 = [y'y - 2 mu'X'y + Tr(X'X Sigma) + mu'X'X mu] / TN. Throws
/// `NumericalError` when the result is not positive.
double mstep_sigma2(const SufficientStats& stats, const PosteriorField& post);

/// phi_k = (c1 / n) Tr(Q~_k E(w_k w_k')). Throws `NumericalError` on a zero trace.
double mstep_phi(const TaskMoments& m, double kappa2, Index n);
double mstep_phi(const PosteriorField& post, double kappa2, Index k);

struct KappaOptions {
  double lower = 1e-4;
  double upper = 1e4;
  double bracket_tol = 1e-2;  ///< golden-section stop, width in log kappa^2
  int newton_steps = 8;
};

struct KappaResult {
  double kappa2 = 0.0;
  double objective = 0.0;
  bool at_bound = false;
  int evaluations = 0;
};

/// (1/2) log|Q~(kappa2)| - (c1 / (2 phi)) Tr(Q~(kappa2) E(w_k w_k')).
double kappa_objective(QtildeFactor& factor, const TaskMoments& m, double phi, double kappa2);

/// Maximizes the kappa objective: golden section in log kappa^2, then a
/// bounded Newton polish. The result is never worse than the interval
/// endpoints or `incoming_kappa2`.
KappaResult mstep_kappa(const TaskMoments& m, double phi, QtildeFactor& factor, double incoming_kappa2,
                        const KappaOptions& options = {});
KappaResult mstep_kappa(const PosteriorField& post, const SpdeStructure& spde, double phi, Index k,
                        const KappaOptions& options = {});

struct InitOptions {
  double kappa2_start = 4.0;
  double tolerance = 1e-3;  ///< relative change in both kappa^2 and phi
  int max_iterations = 100;
  double phi_floor = 1e-8;
  bool accelerate = true;  ///< squared extrapolation of the alternation in log kappa^2
  KappaOptions kappa;
  int threads = 0;
};

struct InitResult {
  Hyperparameters theta;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Alternates phi = c1/n w'Q~w and the kappa objective with E(ww') = ww' for
/// each column of `w` (n x K mesh fields), starting at kappa2_start. Each
/// alternation counts as one iteration; extrapolated points are kept only
/// when they raise the profile likelihood.
InitResult initial_values(const Matrix& w, double sigma2, const SpdeStructure& spde, const InitOptions& options = {});

/// Classical estimates mapped to the mesh (Psi' beta normalized by column
/// sums); sigma^2 from the mean classical residual variance.
InitResult initial_values(const ClassicalFit& fit, const Projector& projector, const SpdeStructure& spde,
                          const InitOptions& options = {});

enum class StopMetric { Absolute, Relative };

struct EmConfig {
  double tolerance = 1e-3;
  int max_iterations = 100;  ///< cap on fixed-point evaluations
  bool accelerate = true;
  StopMetric metric = StopMetric::Absolute;
  KappaOptions kappa;
  TraceOptions traces;
  InitOptions init;
  int threads = 0;
  /// Reject un-whitened input in `fit_em` (residuals must be iid).
  bool require_whitened = true;
};

struct EmIteration {
  int evaluation = 0;
  Hyperparameters theta;        ///< Theta after the update
  double change = 0.0;          ///< stopping metric between input and output
  double log_likelihood = 0.0;  ///< log p(y | Theta) at the input Theta
  double seconds = 0.0;         ///< wall time since the start of the fit
  bool extrapolated = false;    ///< input came from an accepted extrapolation
};

struct EmTrace {
  std::vector<EmIteration> iterations;
  bool converged = false;
  int evaluations = 0;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

struct EmResult {
  Hyperparameters theta;
  PosteriorField posterior;
  EmTrace trace;
  double log_likelihood = 0.0;
};

/// Maximum absolute (or relative) componentwise difference.
double theta_change(const Hyperparameters& a, const Hyperparameters& b, StopMetric metric);

/// EM from `init`. The final posterior is computed at the returned Theta.
EmResult run_em(const SufficientStats& stats, const SpdeStructure& spde, const Hyperparameters& init,
                const EmConfig& config = {});

/// Full pipeline for preprocessed runs sharing Theta: pooled stats,
/// classical initialization, EM. `pooled` receives the pooled statistics.
EmResult fit_em(const std::vector<SessionData>& runs, const SpdeStructure& spde, const Projector& projector,
                const EmConfig& config = {}, SufficientStats* pooled = nullptr);

}  // namespace sbglm
