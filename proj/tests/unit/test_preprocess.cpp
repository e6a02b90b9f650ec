#include <doctest.h>

#include <sbglm/classical_glm.hpp>
#include <sbglm/error.hpp>
#include <sbglm/preprocess.hpp>
#include <sbglm/simulator.hpp>

#include "test_util.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>

using namespace sbglm;

namespace {

Vector white_noise(Index T, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  Vector x(T);
  for (Index t = 0; t < T; ++t) x[t] = z(rng);
  return x;
}

Vector ar_series(const Vector& a, Index T, std::uint64_t seed) {
  const Index burn = 500;
  Vector e = white_noise(T + burn, 1.0, seed);
  Vector x = Vector::Zero(T + burn);
  for (Index t = 0; t < T + burn; ++t) {
    double v = e[t];
    for (Index i = 0; i < a.size() && i < t; ++i) v += a[i] * x[t - 1 - i];
    x[t] = v;
  }
  return x.tail(T);
}

Matrix symmetric_inverse_sqrt(const Matrix& s) {
  Eigen::JacobiSVD<Matrix> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector d = svd.singularValues().cwiseSqrt().cwiseInverse();
  return svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

TEST_CASE("hrf: zero at origin, peak and undershoot") {
  HrfParams p;
  CHECK(hrf_eval(0.0, p) == 0.0);
  double best = -1.0, best_t = 0.0, min_late = 1.0;
  for (int i = 0; i <= 30000; ++i) {
    const double t = i * 1e-3;
    const double h = hrf_eval(t, p);
    REQUIRE(std::isfinite(h));
    if (h > best) best = h, best_t = t;
    if (t >= 10.0 && t <= 20.0) min_late = std::min(min_late, h);
  }
  CHECK(best_t >= 4.5);
  CHECK(best_t <= 6.0);
  CHECK(min_late < 0.0);
  CHECK_THROWS_AS(hrf_eval(-0.1, p), DomainError);
}

TEST_CASE("hrf: invalid parameters") {
  HrfParams p;
  p.b1 = 0.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = HrfParams{};
  p.tr = -1.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("convolve_and_scale: impulse reproduces the sampled response") {
  HrfParams p;
  const Index T = 40;
  Matrix s = Matrix::Zero(T, 1);
  s(0, 0) = 1.0;
  const Matrix raw = convolve_hrf(s, p);
  Vector h(T);
  for (Index t = 0; t < T; ++t) h[t] = hrf_eval(t * p.tr, p);
  CHECK((raw.col(0) / raw.col(0).maxCoeff() - h / h.maxCoeff()).cwiseAbs().maxCoeff() < 1e-12);

  const Matrix x = convolve_and_scale(s, p);
  CHECK(std::abs(x.col(0).mean()) < 1e-12);
  const Vector pre = h / h.maxCoeff();
  CHECK((x.col(0) - (pre.array() - pre.mean()).matrix()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(x.col(0).maxCoeff() - x.col(0).minCoeff() == doctest::Approx(pre.maxCoeff() - pre.minCoeff()));
}

TEST_CASE("convolve_and_scale: boxcar against direct summation") {
  HrfParams p;
  const Index T = 120;
  Matrix s = Matrix::Zero(T, 2);
  for (Index t = 0; t < T; ++t) {
    s(t, 0) = (t / 15) % 2 == 0 ? 1.0 : 0.0;
    s(t, 1) = (t / 15) % 2 == 1 ? 1.0 : 0.0;
  }
  const Matrix x = convolve_and_scale(s, p);
  for (Index k = 0; k < 2; ++k) {
    Vector c(T);
    for (Index t = 0; t < T; ++t) {
      double acc = 0.0;
      for (Index u = 0; u <= t; ++u) acc += s(u, k) * hrf_eval((t - u) * p.tr, p) * p.tr;
      c[t] = acc;
    }
    c /= c.maxCoeff();
    c.array() -= c.mean();
    CHECK((x.col(k) - c).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("convolve_and_scale: degenerate stimulus") {
  Matrix s = Matrix::Zero(30, 2);
  s(3, 0) = 1.0;
  try {
    convolve_and_scale(s, HrfParams{});
    FAIL("expected an error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  s(5, 1) = -1.0;
  CHECK_THROWS_AS(convolve_and_scale(s, HrfParams{}), DomainError);
}

TEST_CASE("scale_bold: hand values") {
  Matrix y(2, 2);
  y << 1, 7.3, 3, 7.3;
  const Matrix s = scale_bold(y);
  CHECK(s(0, 0) == doctest::Approx(-50.0));
  CHECK(s(1, 0) == doctest::Approx(50.0));
  CHECK(s(0, 1) == doctest::Approx(0.0));
  CHECK(s(1, 1) == doctest::Approx(0.0));

  Matrix flat(3, 3);
  flat << 1, 0, 2, 1, 0, 2, 1, 0, 2;
  try {
    scale_bold(flat);
    FAIL("expected an error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("scale_bold: columns have zero mean") {
  Matrix y = Matrix::Random(50, 7).array() + 10.0;
  const Matrix s = scale_bold(y);
  CHECK(s.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("nuisance_regress: trivial cases") {
  Matrix y = Matrix::Random(20, 3);
  y.rowwise() -= y.colwise().mean();
  const Matrix ones = Matrix::Ones(20, 1);
  CHECK((nuisance_regress(y, ones) - y).cwiseAbs().maxCoeff() < 1e-12);

  const Matrix z = Matrix::Random(20, 2);
  const Matrix in_span = z * Matrix::Random(2, 4);
  CHECK(nuisance_regress(in_span, z).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("nuisance_regress: least squares oracle and orthogonality") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Matrix y(60, 5), z(60, 4);
  for (Index i = 0; i < y.size(); ++i) y.data()[i] = n01(rng);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = n01(rng);
  const Matrix r = nuisance_regress(y, z);
  const Matrix oracle = y - z * (z.transpose() * z).ldlt().solve(z.transpose() * y);
  CHECK((r - oracle).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((z.transpose() * r).cwiseAbs().maxCoeff() < 1e-8 * y.norm() * z.norm());
}

TEST_CASE("nuisance_regress: rank-deficient regressors name the dependent column") {
  Matrix z = Matrix::Random(30, 3);
  z.col(2) = 2.0 * z.col(0) - z.col(1);
  try {
    nuisance_regress(Matrix::Random(30, 2), z);
    FAIL("expected an error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("levinson_durbin matches a direct Toeplitz solve") {
  const Vector a = (Vector(3) << 0.5, -0.2, 0.1).finished();
  const Vector r = ar_autocovariance(a, 1.3, 3);
  const LevinsonResult lr = levinson_durbin(r, 3);
  CHECK((lr.coefficients - a).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(lr.innovation_variance == doctest::Approx(1.3).epsilon(1e-10));
  REQUIRE(lr.predictors.size() == 4);
  for (int m = 1; m <= 3; ++m) {
    Matrix toe(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) toe(i, j) = r[std::abs(i - j)];
    const Vector direct = toe.ldlt().solve(r.segment(1, m));
    CHECK((lr.predictors[m] - direct).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("yule_walker: AR(1) coefficient and white noise") {
  const Vector x = ar_series((Vector(1) << 0.5).finished(), 1000, 11);
  CHECK(std::abs(yule_walker(x, 1).coefficients[0] - 0.5) <= 0.05);

  const Index T = 400;
  const Vector e = white_noise(T, 1.7, 12);
  const LevinsonResult w = yule_walker(e, 6);
  CHECK(w.coefficients.cwiseAbs().maxCoeff() < 2.0 / std::sqrt(double(T)));
  const ArWhitener d(w.coefficients, w.innovation_variance);
  const Matrix dd = d.dense(T);
  const double sigma = std::sqrt(w.innovation_variance);
  CHECK(std::abs(sigma - 1.7) < 0.15);
  // Off-diagonals are bounded by the AR coefficients; the diagonal by the innovation sd.
  const Matrix dev = dd - Matrix::Identity(T, T) / sigma;
  CHECK(dev.cwiseAbs().maxCoeff() < 2.0 / std::sqrt(double(T)) / sigma * 1.5);
}

TEST_CASE("stationarity and shrinking") {
  CHECK(is_stationary((Vector(1) << 0.9).finished()));
  CHECK_FALSE(is_stationary((Vector(1) << 1.05).finished()));
  CHECK(is_stationary((Vector(2) << 1.9, -0.95).finished()));
  CHECK_FALSE(is_stationary((Vector(2) << 0.6, 0.5).finished()));
  CHECK(is_stationary(Vector(0)));

  int steps = 0;
  const Vector s = shrink_to_stationary((Vector(2) << 0.6, 0.5).finished(), 0.99, 5000, &steps);
  CHECK(is_stationary(s));
  CHECK(steps > 0);
  CHECK(s[0] / s[1] == doctest::Approx(1.2));
  CHECK_FALSE(is_stationary(s / 0.99));
  CHECK_THROWS_AS(shrink_to_stationary((Vector(1) << 3.0).finished(), 0.99, 5), NumericalError);
}

TEST_CASE("whitener: AR(0) scalar case") {
  const ArWhitener d(Vector(0), 4.0);
  CHECK((d.dense(25) - 0.5 * Matrix::Identity(25, 25)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("whitener: D S D' = I and agreement with the SVD inverse square root") {
  const Vector a = (Vector(6) << 0.4, 0.15, -0.1, 0.08, 0.05, -0.04).finished();
  REQUIRE(is_stationary(a));
  const Index T = 80;
  const Matrix s = ar_covariance(a, 2.5, T);
  const ArWhitener w(a, 2.5);
  const Matrix d = w.dense(T);
  CHECK((d * s * d.transpose() - Matrix::Identity(T, T)).cwiseAbs().maxCoeff() < 1e-6);
  const Matrix root = symmetric_inverse_sqrt(s);
  CHECK((root * s * root - Matrix::Identity(T, T)).cwiseAbs().maxCoeff() < 1e-6);
  // Both are whiteners of S: D'D = S^{-1/2} S^{-1/2}.
  CHECK((d.transpose() * d - root * root).cwiseAbs().maxCoeff() < 1e-6);

  const Matrix x = Matrix::Random(T, 3);
  CHECK((w.apply(x) - d * x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("whitening preserves the GLS target") {
  const Vector a = (Vector(2) << 0.5, -0.2).finished();
  const Index T = 120;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  Matrix x(T, 2);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
  const Vector y = x * Vector::Constant(2, 0.7) + ar_series(a, T, 8);
  const Matrix s = ar_covariance(a, 1.0, T);
  const Matrix si = s.inverse();
  const Vector gls = (x.transpose() * si * x).ldlt().solve(x.transpose() * si * y);
  const ArWhitener w(a, 1.0);
  const Matrix dx = w.apply(x);
  const Vector dy = w.apply(y);
  const Vector ols = dx.colPivHouseholderQr().solve(dy);
  CHECK((gls - ols).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("smoothing weights form a stochastic matrix") {
  const TriangularMesh m = grid_mesh(8, 9, 2.0);
  const RowSparseMatrix w = smoothing_weights(m, 6.0);
  for (Index r = 0; r < w.rows(); ++r) {
    double sum = 0.0;
    for (RowSparseMatrix::InnerIterator it(w, r); it; ++it) {
      CHECK(it.value() >= 0.0);
      sum += it.value();
    }
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("prewhiten: whitened residuals are serially uncorrelated") {
  const Index rows = 6, cols = 6, N = rows * cols, T = 1000;
  const TriangularMesh mesh = grid_mesh(rows, cols, 2.0);
  const Vector a = (Vector(2) << 0.45, 0.2).finished();
  const Matrix stim = block_design(T, 1, 1.0, 15.0, 4);
  const Matrix x = convolve_and_scale(stim, HrfParams{});
  SessionData d;
  d.y.resize(T, N);
  for (Index v = 0; v < N; ++v) d.y.col(v) = 1.5 * x.col(0) + ar_series(a, T, 100 + v);
  d.x = Design(x);
  d.z = Matrix(T, 0);
  const PrewhitenResult pw = prewhiten(d, mesh);
  CHECK(pw.data.whitened);
  CHECK_FALSE(pw.data.x.is_shared());
  CHECK(pw.model.coefficients.rows() == N);
  CHECK(pw.model.coefficients.cols() == 6);
  CHECK((pw.model.innovation_variance.array() > 0.0).all());
  for (Index v = 0; v < N; ++v) CHECK(is_stationary(pw.model.coefficients.row(v).transpose()));

  const double bound = 2.0 / std::sqrt(double(T));
  Vector mean_acf = Vector::Zero(6);
  for (Index v = 0; v < N; ++v) {
    const Matrix& xv = pw.data.x.at(v);
    const Vector yv = pw.data.y.col(v);
    const Vector r = yv - xv * xv.colPivHouseholderQr().solve(yv);
    const Vector acv = sample_autocovariance(r, 6);
    mean_acf += acv.tail(6) / acv[0];
  }
  mean_acf /= double(N);
  CHECK(mean_acf.cwiseAbs().maxCoeff() < bound);
}

TEST_CASE("prewhiten: rejects mismatched mesh") {
  SessionData d = testing::random_session(50, 10, 1, false, 1);
  d.whitened = false;
  CHECK_THROWS(prewhiten(d, grid_mesh(3, 3, 2.0)));
}

TEST_CASE("classical GLM after preprocessing is nearly unbiased") {
  const Index rows = 5, cols = 5, N = rows * cols, T = 300, K = 2;
  const TriangularMesh mesh = grid_mesh(rows, cols, 2.0);
  const Vector a = (Vector(1) << 0.4).finished();
  const double amplitude = 2.0;
  Matrix bias = Matrix::Zero(N, K);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix stim = block_design(T, K, 1.0, 15.0, 50 + rep);
    const Matrix x = convolve_and_scale(stim, HrfParams{});
    Matrix beta(N, K);
    for (Index v = 0; v < N; ++v) beta.row(v) << amplitude * (v % 2), amplitude * 0.5;
    SessionData d;
    d.y.resize(T, N);
    for (Index v = 0; v < N; ++v) d.y.col(v) = x * beta.row(v).transpose() + ar_series(a, T, 1000 * rep + v);
    d.x = Design(x);
    d.z = Matrix(T, 0);
    const PrewhitenResult pw = prewhiten(d, mesh);
    const ClassicalFit fit = fit_classical(pw.data);
    bias += fit.beta - beta;
  }
  bias /= 10.0;
  CHECK(bias.cwiseAbs().mean() < 0.05 * amplitude);
}
