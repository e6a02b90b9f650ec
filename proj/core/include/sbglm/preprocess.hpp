#pragma once

#include <sbglm/mesh.hpp>
#include <sbglm/types.hpp>

#include <vector>

namespace sbglm {

/// Double-gamma haemodynamic response parameters (shapes a1, a2; scales b1, b2
/// in seconds; undershoot ratio c; repetition time tr in seconds).
struct HrfParams {
  double a1 = 6.0;
  double a2 = 12.0;
  double b1 = 0.9;
  double b2 = 0.9;
  double c = 0.35;
  double tr = 1.0;

  void validate() const;
};

/// h(t) = (t/(a1 b1))^a1 exp(-(t - a1 b1)/b1) - c (t/(a2 b2))^a2 exp(-(t - a2 b2)/b2)
double hrf_eval(double t, const HrfParams& p);

/// Causal Riemann-sum convolution of each stimulus column with h sampled at tr.
Matrix convolve_hrf(const Eigen::Ref<const Matrix>& stimulus, const HrfParams& p);

/// HRF convolution, then each column divided by its maximum and centred.
/// Throws `DomainError` naming the task when a stimulus column is all zero.
Matrix convolve_and_scale(const Eigen::Ref<const Matrix>& stimulus, const HrfParams& p);

/// Percent signal change 100 (y - mean) / mean per column. Not idempotent.
Matrix scale_bold(const Eigen::Ref<const Matrix>& y);

/// Residuals of each column of y regressed on the columns of z.
Matrix nuisance_regress(const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& z);

/// Task design: either one T x K matrix shared by every location, or one per
/// location (after prewhitening each location has its own design).
class Design {
 public:
  Design() = default;
  explicit Design(Matrix shared);
  explicit Design(std::vector<Matrix> per_location);

  bool is_shared() const { return per_location_.empty(); }
  const Matrix& at(Index location) const;
  Index timepoints() const;
  Index tasks() const;
  /// Number of per-location matrices (0 when shared).
  Index locations() const { return static_cast<Index>(per_location_.size()); }

 private:
  Matrix shared_;
  std::vector<Matrix> per_location_;
};

/// One run: response y (T x N), design (T x K per location), optional
/// nuisance regressors (T x J), repetition time in seconds.
struct SessionData {
  Matrix y;
  Design x;
  Matrix z;
  double tr = 1.0;
  bool whitened = false;

  Index timepoints() const { return y.rows(); }
  Index locations() const { return y.cols(); }
  Index tasks() const { return x.tasks(); }

  /// Checks T > K + J, finite values and consistent sizes.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Autoregressive noise models

/// Biased sample autocovariances at lags 0..max_lag of a demeaned series.
Vector sample_autocovariance(const Eigen::Ref<const Vector>& x, int max_lag);

struct LevinsonResult {
  Vector coefficients;               ///< order-p AR coefficients a_1..a_p
  double innovation_variance = 0.0;  ///< order-p prediction error variance
  Vector reflection;                 ///< partial autocorrelations k_1..k_p
  std::vector<Vector> predictors;    ///< order-m coefficients, m = 0..p
  Vector error_variances;            ///< order-m prediction error variances, m = 0..p
};

/// Levinson-Durbin recursion on autocovariances r_0..r_p.
LevinsonResult levinson_durbin(const Eigen::Ref<const Vector>& autocov, int order);

/// Yule-Walker AR(order) fit of a series (demeaned internally).
LevinsonResult yule_walker(const Eigen::Ref<const Vector>& x, int order);

/// True when 1 - sum a_i z^i has all roots outside the unit circle.
bool is_stationary(const Eigen::Ref<const Vector>& coefficients);

/// Scales a by `factor` until stationary. Throws `NumericalError` after
/// max_steps; `steps` receives the number of scalings applied.
Vector shrink_to_stationary(const Eigen::Ref<const Vector>& coefficients, double factor, int max_steps,
                            int* steps = nullptr);

/// Theoretical autocovariances at lags 0..max_lag of a stationary AR model.
Vector ar_autocovariance(const Eigen::Ref<const Vector>& coefficients, double innovation_variance, int max_lag);

/// Dense T x T covariance S implied by a stationary AR model.
Matrix ar_covariance(const Eigen::Ref<const Vector>& coefficients, double innovation_variance, Index timepoints);

/// Banded whitening operator D = L^{-1} where S = L L' is the AR-implied
/// covariance; D S D' = I and D'D = S^{-1}.
class ArWhitener {
 public:
  ArWhitener(const Eigen::Ref<const Vector>& coefficients, double innovation_variance);

  int order() const { return static_cast<int>(coefficients_.size()); }
  /// Applies D to every column of x (T x m).
  Matrix apply(const Eigen::Ref<const Matrix>& x) const;
  /// Dense D for T timepoints.
  Matrix dense(Index timepoints) const;

 private:
  Vector coefficients_;
  std::vector<Vector> predictors_;
  Vector inv_sd_;
};

enum class NonstationaryPolicy { Shrink, Error };

struct PrewhitenOptions {
  int ar_order = 6;
  double fwhm_mm = 6.0;
  NonstationaryPolicy nonstationary = NonstationaryPolicy::Shrink;
  double shrink_factor = 0.99;
  int max_shrink_steps = 5000;
};

/// Per-location smoothed AR coefficients (N x p) and innovation variances.
struct PrewhitenModel {
  Matrix coefficients;
  Vector innovation_variance;
  double fwhm_mm = 6.0;
  std::vector<int> shrunk_locations;  ///< locations whose smoothed fit needed shrinking

  ArWhitener whitener(Index location) const;
};

struct PrewhitenResult {
  SessionData data;
  PrewhitenModel model;
};

/// Fits AR(p) to per-location OLS residuals, smooths coefficients and
/// variances over the mesh, and premultiplies y and the design by D.
/// Data locations must coincide with mesh vertices (N == n).
PrewhitenResult prewhiten(const SessionData& data, const TriangularMesh& mesh, const PrewhitenOptions& options = {});

/// Gaussian smoothing weights over graph distance, kernel truncated at
/// 3 x FWHM. Row v holds the normalized weights for location v.
RowSparseMatrix smoothing_weights(const TriangularMesh& mesh, double fwhm_mm);

}  // namespace sbglm
