#pragma once

#include <sbglm/mesh.hpp>
#include <sbglm/sparse_cholesky.hpp>
#include <sbglm/types.hpp>

#include <numbers>
#include <vector>

namespace sbglm {

/// Constant in phi = c1 / (kappa^2 tau^2).
inline constexpr double kC1 = 1.0 / (4.0 * std::numbers::pi);

/// Theta = {kappa^2_k, phi_k, sigma^2}. kappa2 in 1/mm^2, sigma2 in
/// (percent signal change)^2.
struct Hyperparameters {
  std::vector<double> kappa2;
  std::vector<double> phi;
  double sigma2 = 1.0;

  Index tasks() const { return static_cast<Index>(kappa2.size()); }
  /// Throws `DomainError` unless every component is finite and positive.
  void validate() const;

  /// tau_k recovered from phi_k = c1 / (kappa^2_k tau^2_k).
  std::vector<double> tau() const;

  /// Packed as [kappa2_1..K, phi_1..K, sigma2].
  Vector pack() const;
  static Hyperparameters unpack(const Eigen::Ref<const Vector>& packed);
};

/// The three SPDE component matrices laid out on one shared sparsity pattern,
/// so Q~(kappa^2) = kappa^2 C + 2 G + kappa^-2 G C^-1 G is a value update.
class SpdeStructure {
 public:
  explicit SpdeStructure(FemOperators fem);

  Index n() const { return fem_.n(); }
  const FemOperators& fem() const { return fem_; }
  /// Union pattern (full symmetric storage, compressed).
  const SparseMatrix& pattern() const { return pattern_; }
  const Vector& c_values() const { return c_; }
  const Vector& g_values() const { return g_; }
  const Vector& gcg_values() const { return gcg_; }

  SparseMatrix qtilde(double kappa2) const;
  /// Overwrites the values of `out`, which must carry `pattern()`.
  void fill_qtilde(double kappa2, SparseMatrix& out) const;

 private:
  FemOperators fem_;
  SparseMatrix pattern_;
  Vector c_, g_, gcg_;
};

/// Q~(kappa^2) for the given FEM operators. Throws `DomainError` for kappa2 <= 0.
SparseMatrix build_qtilde(double kappa2, const FemOperators& fem);

/// Reusable factorization of Q~ on a fixed pattern (one per worker).
class QtildeFactor {
 public:
  explicit QtildeFactor(const SpdeStructure& spde);

  const SparseCholesky& factorize(double kappa2);
  double log_determinant(double kappa2);
  const SparseCholesky& cholesky() const { return chol_; }
  const SpdeStructure& spde() const { return *spde_; }

 private:
  const SpdeStructure* spde_;
  SparseMatrix q_;
  SparseCholesky chol_;
};

/// Block-diagonal prior precision Q = diag(c1/phi_k Q~_k).
class PrecisionOperator {
 public:
  PrecisionOperator(const SpdeStructure& spde, std::vector<double> kappa2, std::vector<double> phi);
  PrecisionOperator(const SpdeStructure& spde, const Hyperparameters& theta)
      : PrecisionOperator(spde, theta.kappa2, theta.phi) {}

  Index n() const { return spde_->n(); }
  Index tasks() const { return static_cast<Index>(kappa2_.size()); }
  double scale(Index k) const { return kC1 / phi_[k]; }
  SparseMatrix qtilde(Index k) const { return spde_->qtilde(kappa2_[k]); }
  /// Q_k = scale(k) * Q~_k.
  SparseMatrix block(Index k) const;
  /// Assembled nK x nK block-diagonal precision (task-major).
  SparseMatrix assembled() const;

  const std::vector<double>& kappa2() const { return kappa2_; }
  const std::vector<double>& phi() const { return phi_; }
  const SpdeStructure& spde() const { return *spde_; }

 private:
  const SpdeStructure* spde_;
  std::vector<double> kappa2_, phi_;
};

/// log|Q| = nK log c1 - n sum log phi_k + sum log|Q~_k|.
double logdet_q(const PrecisionOperator& prec);

/// w' Q w for an nK vector.
double prior_quadform(const PrecisionOperator& prec, const Eigen::Ref<const Vector>& w);

}  // namespace sbglm
