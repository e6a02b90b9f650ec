#include <sbglm/spde_prior.hpp>

#include <sbglm/error.hpp>

#include <cmath>

namespace sbglm {

void Hyperparameters::validate() const {
  if (kappa2.size() != phi.size()) throw DimensionError("Hyperparameters: kappa2 and phi differ in length");
  for (std::size_t k = 0; k < kappa2.size(); ++k) {
    if (!(kappa2[k] > 0.0) || !std::isfinite(kappa2[k])) {
      throw DomainError("Hyperparameters: kappa2[" + std::to_string(k) + "] must be positive");
    }
    if (!(phi[k] > 0.0) || !std::isfinite(phi[k])) {
      throw DomainError("Hyperparameters: phi[" + std::to_string(k) + "] must be positive");
    }
  }
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw DomainError("Hyperparameters: sigma2 must be positive");
}

std::vector<double> Hyperparameters::tau() const {
  std::vector<double> t(kappa2.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = std::sqrt(kC1 / (phi[k] * kappa2[k]));
  return t;
}

Vector Hyperparameters::pack() const {
  const Index K = tasks();
  Vector p(2 * K + 1);
  for (Index k = 0; k < K; ++k) {
    p[k] = kappa2[k];
    p[K + k] = phi[k];
  }
  p[2 * K] = sigma2;
  return p;
}

Hyperparameters Hyperparameters::unpack(const Eigen::Ref<const Vector>& packed) {
  if (packed.size() < 1 || packed.size() % 2 == 0) throw DimensionError("Hyperparameters::unpack: bad length");
  const Index K = (packed.size() - 1) / 2;
  Hyperparameters theta;
  theta.kappa2.resize(K);
  theta.phi.resize(K);
  for (Index k = 0; k < K; ++k) {
    theta.kappa2[k] = packed[k];
    theta.phi[k] = packed[K + k];
  }
  theta.sigma2 = packed[2 * K];
  return theta;
}

namespace {

// Values of m scattered onto the (superset) pattern p.
Vector values_on(const SparseMatrix& p, const SparseMatrix& m) {
  Vector out = Vector::Zero(p.nonZeros());
  for (Index c = 0; c < p.outerSize(); ++c) {
    SparseMatrix::InnerIterator ip(p, c);
    for (SparseMatrix::InnerIterator im(m, c); im; ++im) {
      while (ip && ip.row() < im.row()) ++ip;
      out[static_cast<Index>(&ip.value() - p.valuePtr())] = im.value();
    }
  }
  return out;
}

}  // namespace

SpdeStructure::SpdeStructure(FemOperators fem) : fem_(std::move(fem)) {
  SparseMatrix ones_c = fem_.C, ones_g = fem_.G, ones_gcg = fem_.GCinvG;
  for (auto* m : {&ones_c, &ones_g, &ones_gcg}) {
    for (Index e = 0; e < m->nonZeros(); ++e) m->valuePtr()[e] = 1.0;
  }
  pattern_ = ones_c + ones_g + ones_gcg;
  pattern_.makeCompressed();
  c_ = values_on(pattern_, fem_.C);
  g_ = values_on(pattern_, fem_.G);
  gcg_ = values_on(pattern_, fem_.GCinvG);
}

void SpdeStructure::fill_qtilde(double kappa2, SparseMatrix& out) const {
  if (!(kappa2 > 0.0)) throw DomainError("Q~: kappa2 must be positive, got " + std::to_string(kappa2));
  if (out.nonZeros() != pattern_.nonZeros()) throw DimensionError("Q~: output does not carry the SPDE pattern");
  Eigen::Map<Vector> v(out.valuePtr(), out.nonZeros());
  v = kappa2 * c_ + 2.0 * g_ + gcg_ / kappa2;
}

SparseMatrix SpdeStructure::qtilde(double kappa2) const {
  SparseMatrix out = pattern_;
  fill_qtilde(kappa2, out);
  return out;
}

SparseMatrix build_qtilde(double kappa2, const FemOperators& fem) {
  if (!(kappa2 > 0.0)) throw DomainError("build_qtilde: kappa2 must be positive, got " + std::to_string(kappa2));
  SparseMatrix q = kappa2 * fem.C + 2.0 * fem.G + (1.0 / kappa2) * fem.GCinvG;
  q.makeCompressed();
  return q;
}

QtildeFactor::QtildeFactor(const SpdeStructure& spde) : spde_(&spde), q_(spde.pattern()) {
  chol_.analyze(q_);
}

const SparseCholesky& QtildeFactor::factorize(double kappa2) {
  spde_->fill_qtilde(kappa2, q_);
  chol_.factorize(q_);
  return chol_;
}

double QtildeFactor::log_determinant(double kappa2) { return factorize(kappa2).log_determinant(); }

PrecisionOperator::PrecisionOperator(const SpdeStructure& spde, std::vector<double> kappa2, std::vector<double> phi)
    : spde_(&spde), kappa2_(std::move(kappa2)), phi_(std::move(phi)) {
  if (kappa2_.size() != phi_.size()) throw DimensionError("PrecisionOperator: kappa2 and phi differ in length");
  for (std::size_t k = 0; k < phi_.size(); ++k) {
    if (!(kappa2_[k] > 0.0) || !(phi_[k] > 0.0)) throw DomainError("PrecisionOperator: parameters must be positive");
  }
}

SparseMatrix PrecisionOperator::block(Index k) const { return scale(k) * qtilde(k); }

SparseMatrix PrecisionOperator::assembled() const {
  const Index n = this->n(), K = tasks();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(spde_->pattern().nonZeros() * K));
  for (Index k = 0; k < K; ++k) {
    const SparseMatrix b = block(k);
    for (Index c = 0; c < b.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(b, c); it; ++it) {
        trip.emplace_back(static_cast<int>(k * n + it.row()), static_cast<int>(k * n + it.col()), it.value());
      }
    }
  }
  SparseMatrix q(n * K, n * K);
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

double logdet_q(const PrecisionOperator& prec) {
  QtildeFactor factor(prec.spde());
  const double n = static_cast<double>(prec.n());
  double total = 0.0;
  for (Index k = 0; k < prec.tasks(); ++k) {
    double ld = 0.0;
    try {
      ld = factor.log_determinant(prec.kappa2()[k]);
    } catch (const NotPositiveDefinite& e) {
      throw NotPositiveDefinite(std::string("logdet_q: task ") + std::to_string(k) + ": " + e.what());
    }
    total += n * std::log(kC1) - n * std::log(prec.phi()[k]) + ld;
  }
  return total;
}

double prior_quadform(const PrecisionOperator& prec, const Eigen::Ref<const Vector>& w) {
  const Index n = prec.n();
  if (w.size() != n * prec.tasks()) throw DimensionError("prior_quadform: vector length differs from nK");
  double total = 0.0;
  for (Index k = 0; k < prec.tasks(); ++k) {
    const auto wk = w.segment(k * n, n);
    total += prec.scale(k) * wk.dot(prec.qtilde(k) * wk);
  }
  return total;
}

}  // namespace sbglm
