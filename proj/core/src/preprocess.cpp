#include <sbglm/preprocess.hpp>

#include <sbglm/error.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace sbglm {

void HrfParams::validate() const {
  if (!(a1 > 0 && a2 > 0 && b1 > 0 && b2 > 0 && c > 0 && tr > 0)) {
    throw DomainError("HrfParams: all parameters must be positive");
  }
}

double hrf_eval(double t, const HrfParams& p) {
  if (!(t >= 0.0)) throw DomainError("hrf_eval: t must be nonnegative, got " + std::to_string(t));
  if (t == 0.0) return 0.0;
  const double peak1 = p.a1 * p.b1, peak2 = p.a2 * p.b2;
  // evaluated in log space to avoid overflow for large t
  const double g1 = std::exp(p.a1 * std::log(t / peak1) - (t - peak1) / p.b1);
  const double g2 = std::exp(p.a2 * std::log(t / peak2) - (t - peak2) / p.b2);
  return g1 - p.c * g2;
}

Matrix convolve_hrf(const Eigen::Ref<const Matrix>& stimulus, const HrfParams& p) {
  p.validate();
  const Index T = stimulus.rows();
  Vector kernel(T);
  for (Index s = 0; s < T; ++s) kernel[s] = hrf_eval(static_cast<double>(s) * p.tr, p) * p.tr;
  Matrix out = Matrix::Zero(T, stimulus.cols());
  for (Index k = 0; k < stimulus.cols(); ++k) {
    for (Index s = 0; s < T; ++s) {
      const double x = stimulus(s, k);
      if (x == 0.0) continue;
      for (Index t = s; t < T; ++t) out(t, k) += x * kernel[t - s];
    }
  }
  return out;
}

Matrix convolve_and_scale(const Eigen::Ref<const Matrix>& stimulus, const HrfParams& p) {
  for (Index k = 0; k < stimulus.cols(); ++k) {
    if ((stimulus.col(k).array() < 0.0).any()) {
      throw DomainError("convolve_and_scale: task " + std::to_string(k) + " has negative stimulus values");
    }
    if (stimulus.col(k).cwiseAbs().maxCoeff() == 0.0) {
      throw DomainError("convolve_and_scale: task " + std::to_string(k) + " has an all-zero stimulus");
    }
  }
  Matrix out = convolve_hrf(stimulus, p);
  for (Index k = 0; k < out.cols(); ++k) {
    const double peak = out.col(k).maxCoeff();
    if (!(peak > 0.0)) {
      throw DomainError("convolve_and_scale: task " + std::to_string(k) + " has no positive response");
    }
    out.col(k) /= peak;
    out.col(k).array() -= out.col(k).mean();
  }
  return out;
}

Matrix scale_bold(const Eigen::Ref<const Matrix>& y) {
  Matrix out(y.rows(), y.cols());
  std::vector<Index> flat;
  for (Index v = 0; v < y.cols(); ++v) {
    const double mean = y.col(v).mean();
    const double scale = 1.0 + y.col(v).cwiseAbs().maxCoeff();
    if (!(std::abs(mean) > 1e-12 * scale)) {
      flat.push_back(v);
      continue;
    }
    out.col(v) = 100.0 * (y.col(v).array() - mean) / mean;
  }
  if (!flat.empty()) {
    std::ostringstream msg;
    msg << "scale_bold: " << flat.size() << " location(s) with zero temporal mean:";
    for (std::size_t i = 0; i < std::min<std::size_t>(flat.size(), 20); ++i) msg << ' ' << flat[i];
    if (flat.size() > 20) msg << " ...";
    throw DomainError(msg.str());
  }
  return out;
}

Matrix nuisance_regress(const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& z) {
  if (y.rows() != z.rows()) throw DimensionError("nuisance_regress: y and z have different row counts");
  if (z.cols() == 0) return y;
  if (z.cols() >= z.rows()) throw DomainError("nuisance_regress: more nuisance columns than timepoints");
  const Eigen::HouseholderQR<Matrix> qr(z);
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < z.cols(); ++j) {
    const double norm = z.col(j).norm();
    if (!(norm > 0.0) || std::abs(r(j, j)) <= 1e-10 * norm) {
      throw DomainError("nuisance_regress: nuisance column " + std::to_string(j) +
                        " is linearly dependent on the preceding columns");
    }
  }
  const Matrix q = qr.householderQ() * Matrix::Identity(z.rows(), z.cols());
  return y - q * (q.transpose() * y);
}

Design::Design(Matrix shared) : shared_(std::move(shared)) {}

Design::Design(std::vector<Matrix> per_location) : per_location_(std::move(per_location)) {
  if (per_location_.empty()) throw DimensionError("Design: empty per-location list");
  for (const auto& m : per_location_) {
    if (m.rows() != per_location_[0].rows() || m.cols() != per_location_[0].cols()) {
      throw DimensionError("Design: per-location designs differ in shape");
    }
  }
}

const Matrix& Design::at(Index location) const {
  if (per_location_.empty()) return shared_;
  return per_location_.at(static_cast<std::size_t>(location));
}

Index Design::timepoints() const { return is_shared() ? shared_.rows() : per_location_[0].rows(); }
Index Design::tasks() const { return is_shared() ? shared_.cols() : per_location_[0].cols(); }

void SessionData::validate() const {
  const Index T = y.rows(), K = x.tasks(), J = z.cols();
  if (x.timepoints() != T) throw DimensionError("SessionData: design and response differ in timepoints");
  if (!x.is_shared() && x.locations() != y.cols()) {
    throw DimensionError("SessionData: per-location design count differs from response columns");
  }
  if (z.size() > 0 && z.rows() != T) throw DimensionError("SessionData: nuisance rows differ from timepoints");
  if (!(T > K + J)) throw DimensionError("SessionData: need T > K + J");
  if (!y.allFinite()) throw InputError("SessionData: non-finite response values");
  if (x.is_shared()) {
    if (!x.at(0).allFinite()) throw InputError("SessionData: non-finite design values");
  } else {
    for (Index v = 0; v < x.locations(); ++v) {
      if (!x.at(v).allFinite()) throw InputError("SessionData: non-finite design at location " + std::to_string(v));
    }
  }
}

Vector sample_autocovariance(const Eigen::Ref<const Vector>& x, int max_lag) {
  const Index T = x.size();
  if (max_lag < 0 || max_lag >= T) throw DomainError("sample_autocovariance: lag out of range");
  const Vector c = x.array() - x.mean();
  Vector r(max_lag + 1);
  for (int h = 0; h <= max_lag; ++h) r[h] = c.head(T - h).dot(c.tail(T - h)) / static_cast<double>(T);
  return r;
}

LevinsonResult levinson_durbin(const Eigen::Ref<const Vector>& autocov, int order) {
  if (order < 0 || autocov.size() < order + 1) throw DimensionError("levinson_durbin: need order+1 autocovariances");
  if (!(autocov[0] > 0.0)) throw NumericalError("levinson_durbin: zero-variance series");
  LevinsonResult out;
  out.reflection = Vector::Zero(order);
  out.error_variances = Vector(order + 1);
  out.predictors.reserve(static_cast<std::size_t>(order) + 1);
  Vector a = Vector::Zero(0);
  double v = autocov[0];
  out.error_variances[0] = v;
  out.predictors.push_back(a);
  for (int m = 1; m <= order; ++m) {
    double num = autocov[m];
    for (int i = 1; i < m; ++i) num -= a[i - 1] * autocov[m - i];
    const double k = num / v;
    Vector next(m);
    for (int i = 1; i < m; ++i) next[i - 1] = a[i - 1] - k * a[m - i - 1];
    next[m - 1] = k;
    a = next;
    v *= (1.0 - k * k);
    out.reflection[m - 1] = k;
    out.error_variances[m] = v;
    out.predictors.push_back(a);
  }
  out.coefficients = a;
  out.innovation_variance = v;
  return out;
}

LevinsonResult yule_walker(const Eigen::Ref<const Vector>& x, int order) {
  return levinson_durbin(sample_autocovariance(x, order), order);
}

bool is_stationary(const Eigen::Ref<const Vector>& coefficients) {
  Vector a = coefficients;
  for (Index m = a.size(); m >= 1; --m) {
    const double k = a[m - 1];
    if (!(std::abs(k) < 1.0)) return false;
    Vector prev(m - 1);
    for (Index i = 1; i < m; ++i) prev[i - 1] = (a[i - 1] + k * a[m - i - 1]) / (1.0 - k * k);
    a = prev;
  }
  return true;
}

Vector shrink_to_stationary(const Eigen::Ref<const Vector>& coefficients, double factor, int max_steps, int* steps) {
  if (!(factor > 0.0 && factor < 1.0)) throw DomainError("shrink_to_stationary: factor must lie in (0, 1)");
  Vector a = coefficients;
  int count = 0;
  while (!is_stationary(a)) {
    if (++count > max_steps) throw NumericalError("shrink_to_stationary: still nonstationary after max_steps");
    a *= factor;
  }
  if (steps) *steps = count;
  return a;
}

Vector ar_autocovariance(const Eigen::Ref<const Vector>& coefficients, double innovation_variance, int max_lag) {
  if (!(innovation_variance > 0.0)) throw DomainError("ar_autocovariance: innovation variance must be positive");
  if (!is_stationary(coefficients)) throw DomainError("ar_autocovariance: AR model is not stationary");
  const int p = static_cast<int>(coefficients.size());
  Matrix m = Matrix::Identity(p + 1, p + 1);
  for (int h = 0; h <= p; ++h) {
    for (int i = 1; i <= p; ++i) m(h, std::abs(h - i)) -= coefficients[i - 1];
  }
  Vector rhs = Vector::Zero(p + 1);
  rhs[0] = innovation_variance;
  const Vector head = m.partialPivLu().solve(rhs);
  Vector gamma(std::max(max_lag, p) + 1);
  gamma.head(p + 1) = head;
  for (int h = p + 1; h <= std::max(max_lag, p); ++h) {
    double g = 0.0;
    for (int i = 1; i <= p; ++i) g += coefficients[i - 1] * gamma[h - i];
    gamma[h] = g;
  }
  return gamma.head(max_lag + 1);
}

Matrix ar_covariance(const Eigen::Ref<const Vector>& coefficients, double innovation_variance, Index timepoints) {
  const Vector gamma = ar_autocovariance(coefficients, innovation_variance, static_cast<int>(timepoints - 1));
  Matrix s(timepoints, timepoints);
  for (Index i = 0; i < timepoints; ++i)
    for (Index j = 0; j < timepoints; ++j) s(i, j) = gamma[std::abs(i - j)];
  return s;
}

ArWhitener::ArWhitener(const Eigen::Ref<const Vector>& coefficients, double innovation_variance)
    : coefficients_(coefficients) {
  const int p = static_cast<int>(coefficients.size());
  const Vector gamma = ar_autocovariance(coefficients, innovation_variance, p);
  const LevinsonResult lev = levinson_durbin(gamma, p);
  predictors_ = lev.predictors;
  inv_sd_ = lev.error_variances.cwiseSqrt().cwiseInverse();
  // the full-order row is exactly the model itself
  predictors_[p] = coefficients_;
  inv_sd_[p] = 1.0 / std::sqrt(innovation_variance);
}

Matrix ArWhitener::apply(const Eigen::Ref<const Matrix>& x) const {
  const Index T = x.rows();
  const int p = order();
  Matrix out(T, x.cols());
  for (Index t = 0; t < T; ++t) {
    const int m = static_cast<int>(std::min<Index>(t, p));
    const Vector& pred = predictors_[m];
    for (Index c = 0; c < x.cols(); ++c) {
      double e = x(t, c);
      for (int i = 1; i <= m; ++i) e -= pred[i - 1] * x(t - i, c);
      out(t, c) = e * inv_sd_[m];
    }
  }
  return out;
}

Matrix ArWhitener::dense(Index timepoints) const {
  return apply(Matrix::Identity(timepoints, timepoints));
}

ArWhitener PrewhitenModel::whitener(Index location) const {
  return ArWhitener(coefficients.row(location).transpose(), innovation_variance[location]);
}

RowSparseMatrix smoothing_weights(const TriangularMesh& mesh, double fwhm_mm) {
  const Index n = mesh.n();
  RowSparseMatrix w(n, n);
  if (fwhm_mm <= 0.0) {
    w.setIdentity();
    return w;
  }
  const double sigma = fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const auto adj = edge_adjacency(mesh);
  std::vector<Triplet> trip;
  for (Index v = 0; v < n; ++v) {
    const auto reach = edge_distances(adj, static_cast<int>(v), 3.0 * fwhm_mm);
    double total = 0.0;
    for (const auto& [u, d] : reach) total += std::exp(-0.5 * d * d / (sigma * sigma));
    for (const auto& [u, d] : reach) {
      trip.emplace_back(static_cast<int>(v), u, std::exp(-0.5 * d * d / (sigma * sigma)) / total);
    }
  }
  w.setFromTriplets(trip.begin(), trip.end());
  return w;
}

PrewhitenResult prewhiten(const SessionData& data, const TriangularMesh& mesh, const PrewhitenOptions& options) {
  data.validate();
  const Index T = data.timepoints(), N = data.locations(), K = data.tasks();
  const int p = options.ar_order;
  if (p < 0) throw DomainError("prewhiten: AR order must be nonnegative");
  if (!(T > p + K)) throw DimensionError("prewhiten: need T > AR order + K");
  if (N != mesh.n()) throw DimensionError("prewhiten: data locations must coincide with mesh vertices");

  Matrix coef(N, p);
  Vector var(N);
  std::optional<Eigen::HouseholderQR<Matrix>> shared_qr;
  if (data.x.is_shared()) shared_qr.emplace(data.x.at(0));
  for (Index v = 0; v < N; ++v) {
    const Matrix& xv = data.x.at(v);
    const Vector beta = shared_qr ? shared_qr->solve(data.y.col(v)) : Vector(xv.householderQr().solve(data.y.col(v)));
    const Vector resid = data.y.col(v) - xv * beta;
    const LevinsonResult fit = yule_walker(resid, p);
    coef.row(v) = fit.coefficients.transpose();
    var[v] = fit.innovation_variance;
  }

  PrewhitenResult out;
  out.model.fwhm_mm = options.fwhm_mm;
  const RowSparseMatrix w = smoothing_weights(mesh, options.fwhm_mm);
  out.model.coefficients = w * coef;
  out.model.innovation_variance = w * var;

  for (Index v = 0; v < N; ++v) {
    if (!(out.model.innovation_variance[v] > 0.0)) {
      throw NumericalError("prewhiten: nonpositive smoothed innovation variance at location " + std::to_string(v));
    }
    Vector a = out.model.coefficients.row(v).transpose();
    if (is_stationary(a)) continue;
    if (options.nonstationary == NonstationaryPolicy::Error) {
      throw NumericalError("prewhiten: smoothed AR fit is nonstationary at location " + std::to_string(v));
    }
    try {
      a = shrink_to_stationary(a, options.shrink_factor, options.max_shrink_steps);
    } catch (const NumericalError&) {
      throw NumericalError("prewhiten: could not shrink AR fit to stationarity at location " + std::to_string(v));
    }
    out.model.coefficients.row(v) = a.transpose();
    out.model.shrunk_locations.push_back(static_cast<int>(v));
  }

  std::vector<Matrix> designs(static_cast<std::size_t>(N));
  out.data.y.resize(T, N);
  for (Index v = 0; v < N; ++v) {
    const ArWhitener d = out.model.whitener(v);
    out.data.y.col(v) = d.apply(data.y.col(v));
    designs[v] = d.apply(data.x.at(v));
  }
  out.data.x = Design(std::move(designs));
  out.data.tr = data.tr;
  out.data.whitened = true;
  return out;
}

}  // namespace sbglm
