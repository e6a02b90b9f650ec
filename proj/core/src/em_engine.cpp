#include <sbglm/em_engine.hpp>

#include <sbglm/error.hpp>
#include <sbglm/parallel.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace sbglm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string describe(const Hyperparameters& theta) {
  std::ostringstream out;
  out.precision(6);
  out << "kappa2 = [";
  for (std::size_t k = 0; k < theta.kappa2.size(); ++k) out << (k ? ", " : "") << theta.kappa2[k];
  out << "], phi = [";
  for (std::size_t k = 0; k < theta.phi.size(); ++k) out << (k ? ", " : "") << theta.phi[k];
  out << "], sigma2 = " << theta.sigma2;
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Posterior system

PosteriorSystem::PosteriorSystem(const SufficientStats& stats, const SpdeStructure& spde)
    : stats_(&stats), spde_(&spde), chol_(std::make_shared<SparseCholesky>()) {
  const Index n = stats.n, K = stats.tasks;
  if (spde.n() != n) {
    throw DimensionError("PosteriorSystem: mesh has " + std::to_string(spde.n()) + " vertices, stats expect " +
                         std::to_string(n));
  }
  if (stats.xtx.rows() != n * K || stats.xty.size() != n * K) throw DimensionError("PosteriorSystem: stats size");
  const SparseMatrix& sp = spde.pattern();

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(sp.nonZeros() * K + stats.xtx.nonZeros()));
  for (Index k = 0; k < K; ++k) {
    for (Index c = 0; c < n; ++c) {
      for (SparseMatrix::InnerIterator it(sp, c); it; ++it) {
        trip.emplace_back(static_cast<int>(k * n + it.row()), static_cast<int>(k * n + c), 1.0);
      }
    }
  }
  for (Index c = 0; c < stats.xtx.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(stats.xtx, c); it; ++it) {
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(c), 1.0);
    }
  }
  pattern_.resize(n * K, n * K);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  const Index nnz = pattern_.nonZeros();
  block_.assign(static_cast<std::size_t>(nnz), -1);
  c_ = Vector::Zero(nnz);
  g_ = Vector::Zero(nnz);
  gcg_ = Vector::Zero(nnz);
  xtx_ = Vector::Zero(nnz);
  const double* pv = pattern_.valuePtr();
  for (Index j = 0; j < n * K; ++j) {
    const Index b = j / n, jl = j % n;
    SparseMatrix::InnerIterator is(sp, jl);
    SparseMatrix::InnerIterator ix(stats.xtx, j);
    for (SparseMatrix::InnerIterator ip(pattern_, j); ip; ++ip) {
      const Index e = static_cast<Index>(&ip.value() - pv);
      const Index r = ip.row();
      if (r / n == b) {
        const Index rl = r % n;
        while (is && is.row() < rl) ++is;
        if (is && is.row() == rl) {
          const Index q = static_cast<Index>(&is.value() - sp.valuePtr());
          block_[e] = static_cast<int>(b);
          c_[e] = spde.c_values()[q];
          g_[e] = spde.g_values()[q];
          gcg_[e] = spde.gcg_values()[q];
        }
      }
      while (ix && ix.row() < r) ++ix;
      if (ix && ix.row() == r) xtx_[e] = ix.value();
    }
  }
  chol_->analyze(pattern_);
  prior_factor_ = std::make_unique<QtildeFactor>(spde);
}

void PosteriorSystem::assemble(const Hyperparameters& theta, SparseMatrix& out) const {
  const Index K = tasks();
  if (theta.tasks() != K) throw DimensionError("PosteriorSystem: Theta has the wrong number of tasks");
  theta.validate();
  if (out.nonZeros() != pattern_.nonZeros() || out.rows() != pattern_.rows()) out = pattern_;
  std::vector<double> a(K), g2(K), d(K);
  for (Index k = 0; k < K; ++k) {
    const double s = kC1 / theta.phi[k];
    a[k] = s * theta.kappa2[k];
    g2[k] = 2.0 * s;
    d[k] = s / theta.kappa2[k];
  }
  const double inv_s2 = 1.0 / theta.sigma2;
  double* v = out.valuePtr();
  for (Index e = 0; e < pattern_.nonZeros(); ++e) {
    const int b = block_[e];
    double x = xtx_[e] * inv_s2;
    if (b >= 0) x += a[b] * c_[e] + g2[b] * g_[e] + d[b] * gcg_[e];
    v[e] = x;
  }
}

SparseMatrix PosteriorSystem::assemble(const Hyperparameters& theta) const {
  SparseMatrix out = pattern_;
  assemble(theta, out);
  return out;
}

PosteriorField PosteriorSystem::posterior(const Hyperparameters& theta, bool moments, const TraceOptions& traces) {
  const Index n = this->n(), K = tasks();
  PosteriorField post;
  post.n = n;
  post.tasks = K;
  post.theta = theta;
  assemble(theta, post.precision);

  if (chol_.use_count() > 1) {
    // an earlier posterior still holds the factor
    auto fresh = std::make_shared<SparseCholesky>();
    fresh->analyze(pattern_);
    chol_ = std::move(fresh);
  }
  try {
    chol_->factorize(post.precision);
  } catch (const NotPositiveDefinite& e) {
    throw NumericalError(std::string("E-step: posterior precision not positive definite at ") + describe(theta) +
                         " (" + e.what() + ")");
  }
  post.factor = chol_;
  post.mu = chol_->solve(Vector(stats_->xty / theta.sigma2));
  post.log_det_precision = chol_->log_determinant();
  if (!moments) return post;

  const FemOperators& fem = spde_->fem();
  post.moments.resize(static_cast<std::size_t>(K));
  const Vector xtx_mu = stats_->xtx * post.mu;
  if (!traces.hutchinson) {
    post.selected_cov = chol_->selected_inverse();
    for (Index k = 0; k < K; ++k) {
      const auto mk = post.mu.segment(k * n, n);
      TaskMoments& m = post.moments[k];
      m.c = post.selected_cov.trace_block(fem.C, k * n) + mk.dot(fem.c_diag.cwiseProduct(mk));
      m.g = post.selected_cov.trace_block(fem.G, k * n) + mk.dot(fem.G * mk);
      m.gcg = post.selected_cov.trace_block(fem.GCinvG, k * n) + mk.dot(fem.GCinvG * mk);
    }
    post.trace_xtx = post.selected_cov.trace_product(stats_->xtx) + post.mu.dot(xtx_mu);
  } else {
    if (traces.probes < 1) throw DomainError("TraceOptions: probes must be positive");
    std::mt19937_64 rng(traces.seed);
    std::bernoulli_distribution coin(0.5);
    Matrix z(n * K, traces.probes);
    for (Index c = 0; c < z.cols(); ++c) {
      for (Index r = 0; r < z.rows(); ++r) z(r, c) = coin(rng) ? 1.0 : -1.0;
    }
    const Matrix sz = chol_->solve_columns(z);
    const double inv_m = 1.0 / static_cast<double>(traces.probes);
    for (Index k = 0; k < K; ++k) {
      const auto zk = z.middleRows(k * n, n);
      const auto sk = sz.middleRows(k * n, n);
      const auto mk = post.mu.segment(k * n, n);
      TaskMoments& m = post.moments[k];
      m.c = inv_m * (zk.array() * (fem.c_diag.asDiagonal() * sk).array()).sum() + mk.dot(fem.c_diag.cwiseProduct(mk));
      m.g = inv_m * (zk.array() * (fem.G * sk).array()).sum() + mk.dot(fem.G * mk);
      m.gcg = inv_m * (zk.array() * (fem.GCinvG * sk).array()).sum() + mk.dot(fem.GCinvG * mk);
    }
    post.trace_xtx = inv_m * (z.array() * (stats_->xtx * sz).array()).sum() + post.mu.dot(xtx_mu);
  }
  return post;
}

double PosteriorSystem::log_det_prior(const Hyperparameters& theta) {
  const double n = static_cast<double>(this->n());
  double total = 0.0;
  for (Index k = 0; k < theta.tasks(); ++k) {
    total += n * std::log(kC1) - n * std::log(theta.phi[k]) + prior_factor_->log_determinant(theta.kappa2[k]);
  }
  return total;
}

double PosteriorSystem::log_likelihood(const PosteriorField& post) {
  const double s2 = post.theta.sigma2;
  const double tn = stats_->tn;
  return -0.5 * tn * std::log(2.0 * std::numbers::pi * s2) + 0.5 * log_det_prior(post.theta) -
         0.5 * post.log_det_precision - 0.5 * (stats_->yty - post.mu.dot(stats_->xty)) / s2;
}

double PosteriorSystem::log_likelihood(const Hyperparameters& theta) {
  return log_likelihood(posterior(theta, false));
}

PosteriorField e_step(const SufficientStats& stats, const Hyperparameters& theta, const SpdeStructure& spde,
                      const TraceOptions& traces) {
  PosteriorSystem system(stats, spde);
  return system.posterior(theta, true, traces);
}

// ---------------------------------------------------------------------------
// M-step

double mstep_sigma2(const SufficientStats& stats, const PosteriorField& post) {
  if (post.moments.empty()) throw DimensionError("mstep_sigma2: posterior has no trace moments");
  const double value = (stats.yty - 2.0 * post.mu.dot(stats.xty) + post.trace_xtx) / stats.tn;
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw NumericalError("mstep_sigma2: nonpositive residual variance " + std::to_string(value));
  }
  return value;
}

double mstep_phi(const TaskMoments& m, double kappa2, Index n) {
  if (!(kappa2 > 0.0)) throw DomainError("mstep_phi: kappa2 must be positive");
  const double trace = m.qtilde(kappa2);
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    throw NumericalError("mstep_phi: degenerate field, Tr(Q~ E(ww')) = " + std::to_string(trace));
  }
  return kC1 * trace / static_cast<double>(n);
}

double mstep_phi(const PosteriorField& post, double kappa2, Index k) {
  if (k < 0 || k >= static_cast<Index>(post.moments.size())) throw DimensionError("mstep_phi: task out of range");
  return mstep_phi(post.moments[k], kappa2, post.n);
}

double kappa_objective(QtildeFactor& factor, const TaskMoments& m, double phi, double kappa2) {
  return 0.5 * factor.log_determinant(kappa2) - kC1 / (2.0 * phi) * m.qtilde(kappa2);
}

KappaResult mstep_kappa(const TaskMoments& m, double phi, QtildeFactor& factor, double incoming_kappa2,
                        const KappaOptions& options) {
  if (!(phi > 0.0)) throw DomainError("mstep_kappa: phi must be positive");
  if (!(options.lower > 0.0 && options.upper > options.lower)) throw DomainError("mstep_kappa: bad search interval");
  const double lo = std::log(options.lower), hi = std::log(options.upper);
  const FemOperators& fem = factor.spde().fem();
  KappaResult result;

  auto value = [&](double t) {
    ++result.evaluations;
    try {
      return kappa_objective(factor, m, phi, std::exp(t));
    } catch (const NotPositiveDefinite&) {
      return kNegInf;
    }
  };
  // d/dt with t = log kappa^2; requires the factor at t
  auto slope = [&](double t) {
    const double k2 = std::exp(t);
    const SelectedInverse s = factor.cholesky().selected_inverse();
    const double tr_c = fem.c_diag.dot(s.diagonal());
    const double tr_gcg = s.trace_product(fem.GCinvG);
    return 0.5 * k2 * (tr_c - tr_gcg / (k2 * k2)) - kC1 / (2.0 * phi) * (k2 * m.c - m.gcg / k2);
  };

  std::vector<std::pair<double, double>> candidates;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = value(c), fd = value(d);
  while (b - a > options.bracket_tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = value(d);
    }
  }
  double t0 = fc >= fd ? c : d;
  double f0 = std::max(fc, fd);
  candidates.emplace_back(t0, f0);

  if (options.newton_steps > 0 && std::isfinite(f0)) {
    const double plo = std::max(lo, a - options.bracket_tol), phi_t = std::min(hi, b + options.bracket_tol);
    try {
      value(t0);
      double d0 = slope(t0);
      double t1 = std::clamp(t0 + (d0 > 0.0 ? 1e-3 : -1e-3), plo, phi_t);
      double f1 = value(t1);
      double d1 = slope(t1);
      candidates.emplace_back(t1, f1);
      for (int step = 0; step < options.newton_steps; ++step) {
        const double curvature = (d1 - d0) / (t1 - t0);
        if (!(curvature < 0.0) || !std::isfinite(curvature)) break;
        const double t2 = std::clamp(t1 - d1 / curvature, plo, phi_t);
        if (std::abs(t2 - t1) < 1e-10) break;
        const double f2 = value(t2);
        if (!std::isfinite(f2)) break;
        const double d2 = slope(t2);
        candidates.emplace_back(t2, f2);
        t0 = t1;
        d0 = d1;
        t1 = t2;
        d1 = d2;
        if (std::abs(d2) < 1e-10 * (1.0 + std::abs(f2))) break;
      }
    } catch (const NotPositiveDefinite&) {
    }
  }
  candidates.emplace_back(lo, value(lo));
  candidates.emplace_back(hi, value(hi));
  if (incoming_kappa2 > 0.0 && std::isfinite(incoming_kappa2)) {
    const double ti = std::log(incoming_kappa2);
    candidates.emplace_back(ti, value(ti));
  }
  auto best = candidates.front();
  for (const auto& cand : candidates) {
    if (cand.second > best.second) best = cand;
  }
  if (!std::isfinite(best.second)) throw NumericalError("mstep_kappa: objective not finite anywhere on the interval");
  result.kappa2 = std::exp(best.first);
  result.objective = best.second;
  result.at_bound = best.first - lo < options.bracket_tol || hi - best.first < options.bracket_tol;
  return result;
}

KappaResult mstep_kappa(const PosteriorField& post, const SpdeStructure& spde, double phi, Index k,
                        const KappaOptions& options) {
  if (k < 0 || k >= static_cast<Index>(post.moments.size())) throw DimensionError("mstep_kappa: task out of range");
  QtildeFactor factor(spde);
  return mstep_kappa(post.moments[k], phi, factor, post.theta.kappa2[k], options);
}

// ---------------------------------------------------------------------------
// Initialization

InitResult initial_values(const Matrix& w, double sigma2, const SpdeStructure& spde, const InitOptions& options) {
  const Index n = spde.n(), K = w.cols();
  if (w.rows() != n) throw DimensionError("initial_values: field has the wrong number of vertices");
  if (!(sigma2 > 0.0)) throw DomainError("initial_values: sigma2 must be positive");
  const FemOperators& fem = spde.fem();

  InitResult out;
  out.theta.kappa2.assign(static_cast<std::size_t>(K), options.kappa2_start);
  out.theta.phi.assign(static_cast<std::size_t>(K), 1.0);
  out.theta.sigma2 = sigma2;
  std::vector<int> iterations(K, 0);
  std::vector<char> converged(K, 0), floored(K, 0), bounded(K, 0);

  parallel_for(static_cast<std::size_t>(K), options.threads, [&](std::size_t k) {
    const Vector wk = w.col(static_cast<Index>(k));
    TaskMoments m;
    m.c = wk.dot(fem.c_diag.cwiseProduct(wk));
    m.g = wk.dot(fem.G * wk);
    m.gcg = wk.dot(fem.GCinvG * wk);
    QtildeFactor factor(spde);
    auto phi_at = [&](double kappa2) {
      const double phi = kC1 * m.qtilde(kappa2) / static_cast<double>(n);
      if (phi > options.phi_floor) return phi;
      floored[k] = 1;
      return options.phi_floor;
    };
    // log p(w | kappa2, phi(kappa2)) up to a constant
    auto profile = [&](double kappa2) {
      const double phi = phi_at(kappa2);
      return kappa_objective(factor, m, phi, kappa2) - 0.5 * static_cast<double>(n) * std::log(phi);
    };
    double kappa2 = options.kappa2_start;
    int it = 0;
    bool done = false;
    // One alternation: phi given kappa2, then kappa2 given phi.
    auto step = [&](double in) {
      ++it;
      const KappaResult kr = mstep_kappa(m, phi_at(in), factor, in, options.kappa);
      if (kr.at_bound) bounded[k] = 1;
      const double p0 = phi_at(in), p1 = phi_at(kr.kappa2);
      done = std::abs(kr.kappa2 - in) <= options.tolerance * in && std::abs(p1 - p0) <= options.tolerance * p0;
      return kr.kappa2;
    };
    while (!done && it < options.max_iterations) {
      const double x0 = kappa2;
      const double x1 = step(x0);
      if (done || it >= options.max_iterations || !options.accelerate) {
        kappa2 = x1;
        continue;
      }
      const double x2 = step(x1);
      kappa2 = x2;
      if (done) break;
      const double r = std::log(x1) - std::log(x0);
      const double v = std::log(x2) - 2.0 * std::log(x1) + std::log(x0);
      if (v == 0.0) continue;
      const double lo = std::log(options.kappa.lower), hi = std::log(options.kappa.upper);
      const double target = profile(x2);
      // Backtrack the step length towards the plain double step (alpha = -1).
      for (double alpha = -std::abs(r) / std::abs(v); alpha < -1.01; alpha = (alpha - 1.0) / 2.0) {
        const double x = std::exp(std::clamp(std::log(x0) - 2.0 * alpha * r + alpha * alpha * v, lo, hi));
        if (profile(x) >= target) {
          kappa2 = x;
          break;
        }
      }
    }
    converged[k] = done;
    iterations[k] = it;
    const double phi = phi_at(kappa2);
    out.theta.kappa2[k] = kappa2;
    out.theta.phi[k] = phi;
  });

  out.converged = true;
  for (Index k = 0; k < K; ++k) {
    out.iterations = std::max(out.iterations, iterations[k]);
    if (!converged[k]) {
      out.converged = false;
      out.warnings.push_back("initial values: task " + std::to_string(k) + " did not converge in " +
                             std::to_string(options.max_iterations) + " iterations");
    }
    if (floored[k]) out.warnings.push_back("initial values: task " + std::to_string(k) + " has a zero field; phi floored");
    if (bounded[k]) {
      out.warnings.push_back("initial values: task " + std::to_string(k) + " kappa2 reached the search bound " +
                             std::to_string(out.theta.kappa2[k]));
    }
  }
  return out;
}

InitResult initial_values(const ClassicalFit& fit, const Projector& projector, const SpdeStructure& spde,
                          const InitOptions& options) {
  if (projector.num_locations() != fit.locations()) throw DimensionError("initial_values: projector/fit mismatch");
  Matrix beta = fit.beta;
  for (Index v = 0; v < beta.rows(); ++v) {
    if (fit.rank_deficient[v]) beta.row(v).setZero();
  }
  Matrix w;
  if (projector.is_identity()) {
    w = beta;
  } else {
    const RowSparseMatrix& psi = projector.matrix();
    w = psi.transpose() * beta;
    const Vector colsum = psi.transpose() * Vector::Ones(psi.rows());
    for (Index i = 0; i < w.rows(); ++i) {
      if (colsum[i] > 0.0) w.row(i) /= colsum[i];
    }
  }
  return initial_values(w, fit.mean_residual_variance(), spde, options);
}

// ---------------------------------------------------------------------------
// EM driver

double theta_change(const Hyperparameters& a, const Hyperparameters& b, StopMetric metric) {
  const Vector pa = a.pack(), pb = b.pack();
  if (pa.size() != pb.size()) throw DimensionError("theta_change: different task counts");
  Vector diff = (pa - pb).cwiseAbs();
  if (metric == StopMetric::Relative) diff = diff.cwiseQuotient(pa.cwiseAbs().cwiseMax(1e-300));
  return diff.maxCoeff();
}

EmResult run_em(const SufficientStats& stats, const SpdeStructure& spde, const Hyperparameters& init,
                const EmConfig& config) {
  init.validate();
  if (!(config.tolerance > 0.0)) throw DomainError("run_em: tolerance must be positive");
  if (config.max_iterations < 1) throw DomainError("run_em: max_iterations must be at least 1");
  if (init.tasks() != stats.tasks) throw DimensionError("run_em: initial Theta has the wrong number of tasks");
  const auto start = std::chrono::steady_clock::now();
  const Index n = stats.n, K = stats.tasks;

  PosteriorSystem system(stats, spde);
  std::vector<std::unique_ptr<QtildeFactor>> factors;
  for (Index k = 0; k < K; ++k) factors.push_back(std::make_unique<QtildeFactor>(spde));

  EmResult result;
  EmTrace& trace = result.trace;
  std::vector<char> bound_warned(K, 0);
  bool sigma_warned = false;

  auto update = [&](const Hyperparameters& theta, double& loglik) {
    PosteriorField post = system.posterior(theta, true, config.traces);
    loglik = system.log_likelihood(post);
    Hyperparameters out = theta;
    try {
      out.sigma2 = mstep_sigma2(stats, post);
    } catch (const NumericalError&) {
      out.sigma2 = 1e-10;
      if (!sigma_warned) trace.warnings.push_back("sigma2 update hit zero; floored at 1e-10");
      sigma_warned = true;
    }
    std::vector<char> at_bound(K, 0);
    parallel_for(static_cast<std::size_t>(K), config.threads, [&](std::size_t k) {
      const KappaResult kr = mstep_kappa(post.moments[k], theta.phi[k], *factors[k], theta.kappa2[k], config.kappa);
      out.kappa2[k] = kr.kappa2;
      out.phi[k] = mstep_phi(post.moments[k], kr.kappa2, n);
      at_bound[k] = kr.at_bound;
    });
    for (Index k = 0; k < K; ++k) {
      if (at_bound[k] && !bound_warned[k]) {
        trace.warnings.push_back("task " + std::to_string(k) + ": kappa2 at search bound " +
                                 std::to_string(out.kappa2[k]));
        bound_warned[k] = 1;
      }
    }
    return out;
  };

  Hyperparameters best = init;
  double best_loglik = kNegInf;
  Hyperparameters final_theta = init;
  bool converged = false;

  auto evaluate = [&](const Hyperparameters& in, bool extrapolated, double& change) {
    double loglik = 0.0;
    Hyperparameters out = update(in, loglik);
    change = theta_change(in, out, config.metric);
    EmIteration row;
    row.evaluation = ++trace.evaluations;
    row.theta = out;
    row.change = change;
    row.log_likelihood = loglik;
    row.extrapolated = extrapolated;
    row.seconds = seconds_since(start);
    trace.iterations.push_back(row);
    if (loglik > best_loglik) {
      best_loglik = loglik;
      best = in;
    }
    return out;
  };

  if (!config.accelerate) {
    Hyperparameters theta = init;
    while (trace.evaluations < config.max_iterations) {
      double change = 0.0;
      theta = evaluate(theta, false, change);
      if (change <= config.tolerance) {
        converged = true;
        break;
      }
    }
    final_theta = converged ? theta : best;
  } else {
    const double log_lo = std::log(config.kappa.lower), log_hi = std::log(config.kappa.upper);
    auto to_log = [](const Hyperparameters& t) { return Vector(t.pack().array().log()); };
    auto from_log = [&](Vector u) {
      for (Index k = 0; k < K; ++k) u[k] = std::clamp(u[k], log_lo, log_hi);
      for (Index i = K; i < u.size(); ++i) u[i] = std::clamp(u[i], -60.0, 60.0);
      return Hyperparameters::unpack(u.array().exp().matrix());
    };
    const double mstep = 4.0;
    double stepmax = 1.0;
    const double stepmin = 1.0;
    Hyperparameters p = init;
    bool extrapolated = false;
    while (trace.evaluations < config.max_iterations) {
      double change = 0.0;
      const Hyperparameters p1 = evaluate(p, extrapolated, change);
      if (change <= config.tolerance) {
        final_theta = p1;
        converged = true;
        break;
      }
      if (trace.evaluations >= config.max_iterations) break;
      const Hyperparameters p2 = evaluate(p1, false, change);
      if (change <= config.tolerance) {
        final_theta = p2;
        converged = true;
        break;
      }
      const Vector u = to_log(p), u1 = to_log(p1), u2 = to_log(p2);
      const Vector r = u1 - u, v = u2 - 2.0 * u1 + u;
      const double sr2 = r.squaredNorm(), sv2 = v.squaredNorm();
      double alpha = sv2 > 0.0 ? std::sqrt(sr2 / sv2) : stepmax;
      alpha = std::clamp(alpha, stepmin, stepmax);
      if (alpha == stepmax) stepmax *= mstep;
      extrapolated = false;
      p = p2;
      if (alpha > 1.0 + 1e-12) {
        const Hyperparameters pnew = from_log(u + 2.0 * alpha * r + alpha * alpha * v);
        try {
          const double l_new = system.log_likelihood(pnew);
          const double l_2 = system.log_likelihood(p2);
          if (std::isfinite(l_new) && l_new >= l_2) {
            p = pnew;
            extrapolated = true;
          } else {
            stepmax = std::max(1.0, stepmax / mstep);
          }
        } catch (const NumericalError&) {
          stepmax = std::max(1.0, stepmax / mstep);
        }
      }
    }
    if (!converged) final_theta = best;
  }

  if (!converged) {
    trace.warnings.push_back("EM did not converge in " + std::to_string(config.max_iterations) +
                             " evaluations; returning the best iterate");
  }
  trace.converged = converged;
  result.theta = final_theta;
  result.posterior = system.posterior(final_theta, true, config.traces);
  result.log_likelihood = system.log_likelihood(result.posterior);
  trace.seconds = seconds_since(start);
  return result;
}

EmResult fit_em(const std::vector<SessionData>& runs, const SpdeStructure& spde, const Projector& projector,
                const EmConfig& config, SufficientStats* pooled) {
  if (runs.empty()) throw DimensionError("fit_em: no runs");
  std::vector<SufficientStats> parts;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (config.require_whitened && !runs[r].whitened) {
      throw InputError("fit_em: run " + std::to_string(r) + " is not prewhitened");
    }
    parts.push_back(compute_sufficient_stats(runs[r], projector));
  }
  const SufficientStats stats = pool(parts);
  const ClassicalFit classical = fit_classical(runs);
  InitResult init = initial_values(classical, projector, spde, config.init);
  EmResult result = run_em(stats, spde, init.theta, config);
  result.trace.warnings.insert(result.trace.warnings.begin(), init.warnings.begin(), init.warnings.end());
  if (pooled) *pooled = stats;
  return result;
}

}  // namespace sbglm
