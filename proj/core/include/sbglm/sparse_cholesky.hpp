#pragma once

#include <sbglm/types.hpp>

#include <memory>
#include <vector>

namespace sbglm {

class SelectedInverse;

/// Sparse LDL' factorization with a fill-reducing ordering computed once.
///
/// `analyze` fixes the symbolic structure; subsequent `factorize` calls must use
/// matrices with the same sparsity pattern (values may change). Only the lower
/// triangle of the input is read.
class SparseCholesky {
 public:
  SparseCholesky();
  ~SparseCholesky();
  SparseCholesky(SparseCholesky&&) noexcept;
  SparseCholesky& operator=(SparseCholesky&&) noexcept;

  void analyze(const SparseMatrix& a);
  /// Throws `NotPositiveDefinite` when a pivot is not strictly positive.
  void factorize(const SparseMatrix& a);
  void compute(const SparseMatrix& a) {
    analyze(a);
    factorize(a);
  }

  bool analyzed() const;
  Index rows() const;

  Vector solve(const Eigen::Ref<const Vector>& b) const;
  Matrix solve_columns(const Eigen::Ref<const Matrix>& b) const;
  double log_determinant() const;

  /// Given iid standard normals z, returns x with Cov(x) = A^{-1}.
  Vector sample(const Eigen::Ref<const Vector>& z) const;

  /// Entries of A^{-1} on the pattern of the factor (Takahashi recursion).
  SelectedInverse selected_inverse() const;

  /// Number of stored entries in the strictly lower factor.
  Index factor_nonzeros() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  friend class SelectedInverse;
};

/// Entries of a symmetric inverse restricted to the filled pattern of its
/// Cholesky factor, indexed in the original (unpermuted) ordering.
class SelectedInverse {
 public:
  SelectedInverse() = default;

  Index rows() const { return static_cast<Index>(diag_.size()); }

  /// Throws `DimensionError` when (i, j) lies outside the stored pattern.
  double operator()(Index i, Index j) const;
  bool contains(Index i, Index j) const;

  Vector diagonal() const;

  /// Tr(B * A^{-1}) for symmetric B stored in full (both triangles); every
  /// nonzero of B must lie in the stored pattern.
  double trace_product(const SparseMatrix& b) const;

  /// Tr(B * A^{-1}[off:off+m, off:off+m]) for an m x m block B stored in full.
  double trace_block(const SparseMatrix& b, Index offset) const;

 private:
  friend class SparseCholesky;
  const double* find(Index pi, Index pj) const;

  std::vector<int> perm_;             // original -> factor ordering
  std::vector<int> col_ptr_;          // strictly lower pattern (factor ordering)
  std::vector<int> row_idx_;
  std::vector<double> lower_;         // Sigma values aligned with row_idx_
  std::vector<double> diag_;          // Sigma diagonal (factor ordering)
};

}  // namespace sbglm
