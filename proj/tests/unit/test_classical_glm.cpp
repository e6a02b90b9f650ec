#include <doctest.h>

#include <sbglm/classical_glm.hpp>
#include <sbglm/error.hpp>

#include "test_util.hpp"

#include <Eigen/QR>

#include <cmath>
#include <random>

using namespace sbglm;

TEST_CASE("fit_classical: noiseless recovery") {
  SessionData d = testing::random_session(40, 6, 3, true, 1);
  Matrix beta = Matrix::Random(6, 3);
  for (Index v = 0; v < 6; ++v) d.y.col(v) = d.x.at(v) * beta.row(v).transpose();
  const ClassicalFit f = fit_classical(d);
  CHECK((f.beta - beta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(f.dof == 37);
  CHECK(f.resid_var.maxCoeff() < 1e-20);
}

TEST_CASE("fit_classical: orthonormal design gives X'y") {
  Matrix q = Eigen::HouseholderQR<Matrix>(Matrix::Random(30, 2)).householderQ() * Matrix::Identity(30, 2);
  SessionData d;
  d.y = Matrix::Random(30, 4);
  d.x = Design(q);
  d.z = Matrix(30, 0);
  const ClassicalFit f = fit_classical(d);
  CHECK((f.beta - (q.transpose() * d.y).transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fit_classical: pseudo-inverse oracle, standard errors and pooled runs") {
  const SessionData d = testing::random_session(50, 5, 2, true, 3);
  const ClassicalFit f = fit_classical(d);
  for (Index v = 0; v < 5; ++v) {
    const Matrix& x = d.x.at(v);
    const Matrix pinv = x.completeOrthogonalDecomposition().pseudoInverse();
    const Vector b = pinv * d.y.col(v);
    CHECK((f.beta.row(v).transpose() - b).cwiseAbs().maxCoeff() < 1e-10);
    const double rv = (d.y.col(v) - x * b).squaredNorm() / (50 - 2);
    CHECK(f.resid_var[v] == doctest::Approx(rv).epsilon(1e-10));
    const Vector se = ((x.transpose() * x).inverse().diagonal() * rv).cwiseSqrt();
    CHECK((f.se.row(v).transpose() - se).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((f.se.row(v).array() > 0.0).all());
  }

  const SessionData e = testing::random_session(30, 5, 2, true, 4);
  const ClassicalFit pooled = fit_classical(std::vector<SessionData>{d, e});
  for (Index v = 0; v < 5; ++v) {
    Matrix x(80, 2);
    x << d.x.at(v), e.x.at(v);
    Vector y(80);
    y << d.y.col(v), e.y.col(v);
    CHECK((pooled.beta.row(v).transpose() - x.colPivHouseholderQr().solve(y)).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(pooled.dof == 78);
}

TEST_CASE("fit_classical: rank deficiency is flagged per location") {
  SessionData d = testing::random_session(20, 3, 2, true, 5);
  std::vector<Matrix> xs{d.x.at(0), d.x.at(1), d.x.at(2)};
  xs[1].col(1) = 2.0 * xs[1].col(0);
  d.x = Design(xs);
  const ClassicalFit f = fit_classical(d);
  CHECK_FALSE(f.rank_deficient[0]);
  CHECK(f.rank_deficient[1]);
  CHECK(std::isnan(f.beta(1, 0)));
  CHECK(std::isfinite(f.beta(2, 1)));
  CHECK(std::isfinite(f.mean_residual_variance()));
  const ActivationMask a = activation_ttest(f, -1e9, 0.5);
  CHECK_FALSE(a(1, 0));
  CHECK(a(0, 0));
}

TEST_CASE("activation_ttest: null, strong signal and Bonferroni") {
  const Index T = 300;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  Matrix x(T, 1);
  for (Index t = 0; t < T; ++t) x(t, 0) = n01(rng);
  SessionData zero;
  zero.y = Matrix::Zero(T, 4);
  zero.x = Design(x);
  zero.z = Matrix(T, 0);
  const ClassicalFit fz = fit_classical(zero);
  CHECK_FALSE(activation_ttest(fz, 0.0, 0.05).any());

  SessionData strong = zero;
  for (Index v = 0; v < 4; ++v) {
    for (Index t = 0; t < T; ++t) strong.y(t, v) = 10.0 * x(t, 0) + 0.1 * n01(rng);
  }
  const ClassicalFit fs = fit_classical(strong);
  for (double g : {0.0, 0.5, 1.0}) {
    CHECK(activation_ttest(fs, g, 0.01).all());
    CHECK(activation_ttest(fs, g, 0.01, Correction::Bonferroni).all());
  }

  const SessionData noisy = testing::random_session(60, 200, 2, false, 10);
  const ClassicalFit fn = fit_classical(noisy);
  const ActivationMask plain = activation_ttest(fn, 0.0, 0.2);
  const ActivationMask bonf = activation_ttest(fn, 0.0, 0.2, Correction::Bonferroni);
  CHECK((bonf && !plain).count() == 0);
  CHECK(bonf.count() <= plain.count());
  CHECK(plain.count() > 0);
}

TEST_CASE("fit_classical: invalid input") {
  SessionData d = testing::random_session(3, 2, 3, false, 11);
  CHECK_THROWS(fit_classical(d));
  CHECK_THROWS(fit_classical(std::vector<SessionData>{}));
}

TEST_CASE("fit_classical on whitened data equals GLS") {
  const Index T = 150, N = 4;
  const SessionData raw = testing::random_session(T, N, 2, false, 12);
  std::vector<Matrix> xs;
  Matrix yw(T, N);
  std::vector<Vector> coefs{(Vector(2) << 0.5, -0.2).finished(), (Vector(1) << 0.3).finished(), Vector(0),
                            (Vector(3) << 0.2, 0.1, 0.1).finished()};
  for (Index v = 0; v < N; ++v) {
    const ArWhitener w(coefs[v], 1.0 + v);
    xs.push_back(w.apply(raw.x.at(v)));
    yw.col(v) = w.apply(raw.y.col(v));
  }
  SessionData white;
  white.y = yw;
  white.x = Design(xs);
  white.z = Matrix(T, 0);
  white.whitened = true;
  const ClassicalFit f = fit_classical(white);
  for (Index v = 0; v < N; ++v) {
    const Matrix si = ar_covariance(coefs[v], 1.0 + v, T).inverse();
    const Matrix& x = raw.x.at(v);
    const Vector gls = (x.transpose() * si * x).ldlt().solve(x.transpose() * si * raw.y.col(v));
    CHECK((f.beta.row(v).transpose() - gls).cwiseAbs().maxCoeff() < 1e-6);
  }
}
