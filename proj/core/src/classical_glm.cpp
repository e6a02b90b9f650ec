#include <sbglm/classical_glm.hpp>

#include <sbglm/error.hpp>

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>

namespace sbglm {

double ClassicalFit::mean_residual_variance() const {
  double total = 0.0;
  Index count = 0;
  for (Index v = 0; v < resid_var.size(); ++v) {
    if (rank_deficient[v]) continue;
    total += resid_var[v];
    ++count;
  }
  if (count == 0) throw NumericalError("ClassicalFit: no full-rank locations");
  return total / static_cast<double>(count);
}

ClassicalFit fit_classical(const SessionData& data) { return fit_classical(std::vector<SessionData>{data}); }

ClassicalFit fit_classical(const std::vector<SessionData>& runs) {
  if (runs.empty()) throw DimensionError("fit_classical: no runs");
  const Index N = runs[0].locations(), K = runs[0].tasks();
  Index T = 0;
  for (const auto& r : runs) {
    r.validate();
    if (r.locations() != N || r.tasks() != K) throw DimensionError("fit_classical: runs differ in locations or tasks");
    T += r.timepoints();
  }
  if (T <= K) throw DimensionError("fit_classical: need more timepoints than tasks");

  ClassicalFit fit;
  fit.beta.resize(N, K);
  fit.se.resize(N, K);
  fit.resid_var.resize(N);
  fit.rank_deficient.assign(static_cast<std::size_t>(N), false);
  fit.dof = T - K;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Matrix x(T, K);
  Vector y(T);
  for (Index v = 0; v < N; ++v) {
    Index row = 0;
    for (const auto& r : runs) {
      const Index t = r.timepoints();
      x.middleRows(row, t) = r.x.at(v);
      y.segment(row, t) = r.y.col(v);
      row += t;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < K) {
      fit.rank_deficient[v] = true;
      fit.beta.row(v).setConstant(nan);
      fit.se.row(v).setConstant(nan);
      fit.resid_var[v] = nan;
      continue;
    }
    const Vector b = qr.solve(y);
    const double s2 = (y - x * b).squaredNorm() / static_cast<double>(fit.dof);
    const Matrix xtx_inv = (x.transpose() * x).inverse();
    fit.beta.row(v) = b.transpose();
    fit.resid_var[v] = s2;
    fit.se.row(v) = (s2 * xtx_inv.diagonal().array()).sqrt().transpose();
  }
  return fit;
}

ActivationMask activation_ttest(const ClassicalFit& fit, double gamma, double alpha, Correction correction) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("activation_ttest: alpha must lie in (0, 1)");
  if (fit.dof < 1) throw DomainError("activation_ttest: no residual degrees of freedom");
  const Index N = fit.locations(), K = fit.tasks();
  const double level = correction == Correction::Bonferroni ? alpha / static_cast<double>(N * K) : alpha;
  boost::math::students_t dist(static_cast<double>(fit.dof));
  const double critical = boost::math::quantile(boost::math::complement(dist, level));
  ActivationMask active = ActivationMask::Constant(N, K, false);
  for (Index v = 0; v < N; ++v) {
    if (fit.rank_deficient[v]) continue;
    for (Index k = 0; k < K; ++k) {
      const double se = fit.se(v, k);
      const double diff = fit.beta(v, k) - gamma;
      if (se > 0.0) {
        active(v, k) = diff / se > critical;
      } else {
        active(v, k) = diff > 0.0;
      }
    }
  }
  return active;
}

}  // namespace sbglm
