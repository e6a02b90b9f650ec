#include <sbglm/sparse_cholesky.hpp>

#include <sbglm/error.hpp>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace sbglm {

struct SparseCholesky::Impl {
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
  bool analyzed = false;
  bool factorized = false;
  Index n = 0;
};

SparseCholesky::SparseCholesky() : impl_(std::make_unique<Impl>()) {}
SparseCholesky::~SparseCholesky() = default;
SparseCholesky::SparseCholesky(SparseCholesky&&) noexcept = default;
SparseCholesky& SparseCholesky::operator=(SparseCholesky&&) noexcept = default;

void SparseCholesky::analyze(const SparseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("SparseCholesky: matrix is not square");
  impl_->ldlt.analyzePattern(a);
  impl_->analyzed = true;
  impl_->factorized = false;
  impl_->n = a.rows();
}

void SparseCholesky::factorize(const SparseMatrix& a) {
  if (!impl_->analyzed) analyze(a);
  if (a.rows() != impl_->n) throw DimensionError("SparseCholesky: size differs from analyzed pattern");
  impl_->factorized = false;
  impl_->ldlt.factorize(a);
  if (impl_->ldlt.info() != Eigen::Success) {
    throw NotPositiveDefinite("SparseCholesky: factorization failed (zero pivot)");
  }
  const Vector& d = impl_->ldlt.vectorD();
  for (Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0) || !std::isfinite(d[i])) {
      throw NotPositiveDefinite("SparseCholesky: nonpositive pivot " + std::to_string(d[i]) + " at position " +
                                std::to_string(i));
    }
  }
  impl_->factorized = true;
}

bool SparseCholesky::analyzed() const { return impl_->analyzed; }
Index SparseCholesky::rows() const { return impl_->n; }

Vector SparseCholesky::solve(const Eigen::Ref<const Vector>& b) const {
  if (!impl_->factorized) throw NumericalError("SparseCholesky::solve before factorize");
  return impl_->ldlt.solve(Vector(b));
}

Matrix SparseCholesky::solve_columns(const Eigen::Ref<const Matrix>& b) const {
  if (!impl_->factorized) throw NumericalError("SparseCholesky::solve before factorize");
  return impl_->ldlt.solve(Matrix(b));
}

double SparseCholesky::log_determinant() const {
  if (!impl_->factorized) throw NumericalError("SparseCholesky::log_determinant before factorize");
  return impl_->ldlt.vectorD().array().log().sum();
}

Vector SparseCholesky::sample(const Eigen::Ref<const Vector>& z) const {
  if (!impl_->factorized) throw NumericalError("SparseCholesky::sample before factorize");
  if (z.size() != impl_->n) throw DimensionError("SparseCholesky::sample: size mismatch");
  const auto& ldlt = impl_->ldlt;
  Vector y = z.cwiseQuotient(ldlt.vectorD().cwiseSqrt());
  ldlt.matrixU().solveInPlace(y);  // y = L^{-T} D^{-1/2} z in factor ordering
  const auto& perm = ldlt.permutationP().indices();
  Vector x(impl_->n);
  for (Index i = 0; i < impl_->n; ++i) x[i] = y[perm[i]];
  return x;
}

Index SparseCholesky::factor_nonzeros() const {
  if (!impl_->factorized) return 0;
  return impl_->ldlt.matrixL().nestedExpression().nonZeros();
}

SelectedInverse SparseCholesky::selected_inverse() const {
  if (!impl_->factorized) throw NumericalError("SparseCholesky::selected_inverse before factorize");
  const auto& ldlt = impl_->ldlt;
  const auto& L = ldlt.matrixL().nestedExpression();
  const Vector& D = ldlt.vectorD();
  const Index n = impl_->n;

  SelectedInverse out;
  out.perm_.resize(static_cast<std::size_t>(n));
  const auto& perm = ldlt.permutationP().indices();
  for (Index i = 0; i < n; ++i) out.perm_[i] = perm[i];

  // Strictly-lower pattern of L, rows sorted within each column.
  std::vector<double> lval;
  out.col_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
  out.row_idx_.reserve(static_cast<std::size_t>(L.nonZeros()));
  lval.reserve(static_cast<std::size_t>(L.nonZeros()));
  std::vector<std::pair<int, double>> col;
  for (Index j = 0; j < n; ++j) {
    col.clear();
    for (SparseMatrix::InnerIterator it(L, j); it; ++it) {
      if (it.row() > j) col.emplace_back(static_cast<int>(it.row()), it.value());
    }
    std::sort(col.begin(), col.end());
    for (const auto& [r, v] : col) {
      out.row_idx_.push_back(r);
      lval.push_back(v);
    }
    out.col_ptr_[j + 1] = static_cast<int>(out.row_idx_.size());
  }
  out.lower_.assign(out.row_idx_.size(), 0.0);
  out.diag_.assign(static_cast<std::size_t>(n), 0.0);

  std::vector<double> acc;
  std::vector<int> where(static_cast<std::size_t>(n), -1);
  for (Index j = n - 1; j >= 0; --j) {
    const int p0 = out.col_ptr_[j], p1 = out.col_ptr_[j + 1];
    const int m = p1 - p0;
    acc.assign(static_cast<std::size_t>(m), 0.0);
    for (int a = 0; a < m; ++a) where[out.row_idx_[p0 + a]] = a;
    for (int b = 0; b < m; ++b) {
      const int c = out.row_idx_[p0 + b];
      const double lb = lval[p0 + b];
      acc[b] += lb * out.diag_[c];
      int remaining = m - b - 1;
      double accb = 0.0;
      for (int q = out.col_ptr_[c], qend = out.col_ptr_[c + 1]; remaining > 0 && q < qend; ++q) {
        const int a = where[out.row_idx_[q]];
        if (a < 0) continue;
        const double s = out.lower_[q];
        acc[a] += lb * s;
        accb += lval[p0 + a] * s;
        --remaining;
      }
      if (remaining > 0) throw NumericalError("selected_inverse: factor pattern is not closed under elimination");
      acc[b] += accb;
    }
    for (int a = 0; a < m; ++a) where[out.row_idx_[p0 + a]] = -1;
    double djj = 1.0 / D[j];
    for (int a = 0; a < m; ++a) {
      out.lower_[p0 + a] = -acc[a];
      djj += lval[p0 + a] * acc[a];
    }
    out.diag_[j] = djj;
  }
  return out;
}

const double* SelectedInverse::find(Index pi, Index pj) const {
  if (pi == pj) return &diag_[pi];
  const Index r = std::max(pi, pj), c = std::min(pi, pj);
  const auto first = row_idx_.begin() + col_ptr_[c];
  const auto last = row_idx_.begin() + col_ptr_[c + 1];
  const auto it = std::lower_bound(first, last, static_cast<int>(r));
  if (it == last || *it != r) return nullptr;
  return &lower_[static_cast<std::size_t>(it - row_idx_.begin())];
}

bool SelectedInverse::contains(Index i, Index j) const {
  if (i < 0 || j < 0 || i >= rows() || j >= rows()) return false;
  return find(perm_[i], perm_[j]) != nullptr;
}

double SelectedInverse::operator()(Index i, Index j) const {
  if (i < 0 || j < 0 || i >= rows() || j >= rows()) throw DimensionError("SelectedInverse: index out of range");
  const double* p = find(perm_[i], perm_[j]);
  if (!p) {
    throw DimensionError("SelectedInverse: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") outside the factor pattern");
  }
  return *p;
}

Vector SelectedInverse::diagonal() const {
  Vector d(rows());
  for (Index i = 0; i < rows(); ++i) d[i] = diag_[perm_[i]];
  return d;
}

double SelectedInverse::trace_block(const SparseMatrix& b, Index offset) const {
  if (b.rows() != b.cols() || offset < 0 || offset + b.rows() > rows()) {
    throw DimensionError("SelectedInverse::trace_block: block does not fit");
  }
  double total = 0.0;
  for (Index c = 0; c < b.outerSize(); ++c) {
    const Index pc = perm_[offset + c];
    for (SparseMatrix::InnerIterator it(b, c); it; ++it) {
      const double* p = find(perm_[offset + it.row()], pc);
      if (!p) throw DimensionError("SelectedInverse::trace_block: entry outside the factor pattern");
      total += it.value() * *p;
    }
  }
  return total;
}

double SelectedInverse::trace_product(const SparseMatrix& b) const {
  if (b.rows() != rows()) throw DimensionError("SelectedInverse::trace_product: size mismatch");
  return trace_block(b, 0);
}

}  // namespace sbglm
