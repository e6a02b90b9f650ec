#include <doctest.h>

#include <sbglm/em_engine.hpp>
#include <sbglm/error.hpp>
#include <sbglm/excursions.hpp>

#include "test_util.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <random>

using namespace sbglm;

namespace {

// Posterior with independent coordinates: mean mu, standard deviations sd.
PosteriorField diagonal_posterior(const Vector& mu, const Vector& sd) {
  PosteriorField p;
  p.n = mu.size();
  p.tasks = 1;
  p.mu = mu;
  SparseMatrix prec(mu.size(), mu.size());
  for (Index i = 0; i < mu.size(); ++i) prec.insert(i, i) = 1.0 / (sd[i] * sd[i]);
  prec.makeCompressed();
  auto chol = std::make_shared<SparseCholesky>();
  chol->compute(prec);
  p.precision = prec;
  p.factor = chol;
  return p;
}

double upper_tail(double mean, double sd, double gamma) {
  return boost::math::cdf(boost::math::complement(boost::math::normal(mean, sd), gamma));
}

PosteriorField fitted_posterior(std::uint64_t seed) {
  static const TriangularMesh mesh = grid_mesh(8, 8, 2.0);
  static const SpdeStructure spde(assemble_fem(mesh));
  SessionData d = testing::random_session(60, 64, 2, false, seed);
  for (Index v = 0; v < 64; ++v) {
    const double bump = 1.5 * std::exp(-(mesh.vertices().row(v) - Eigen::RowVector3d(7, 7, 0)).squaredNorm() / 20.0);
    d.y.col(v) += d.x.at(v).col(0) * bump + d.x.at(v).col(1) * 0.8 * bump;
  }
  const SufficientStats st = compute_sufficient_stats(d, Projector::identity(64));
  return e_step(st, Hyperparameters{{0.3, 0.3}, {0.05, 0.05}, 1.0}, spde);
}

}  // namespace

TEST_CASE("excursions: independent toy matches the product of tail probabilities") {
  const Vector mu = (Vector(5) << 3.0, 2.7, 3.4, 2.9, 3.1).finished();
  const Vector sd = Vector::Ones(5);
  const PosteriorField post = diagonal_posterior(mu, sd);
  ExcursionOptions opt;
  opt.alpha = 0.05;
  opt.samples = 10000;
  const ExcursionResult r = excursion_set(post, Projector::identity(5), 0.0, opt);
  double product = 1.0;
  Index in_set = 0;
  for (Index v = 0; v < 5; ++v) {
    const double p = upper_tail(mu[v], sd[v], 0.0);
    CHECK(r.marginal_prob(v, 0) == doctest::Approx(p).epsilon(1e-10));
    if (r.active(v, 0)) product *= p, ++in_set;
  }
  REQUIRE(in_set >= 3);
  const double se = std::sqrt(product * (1.0 - product) / 10000.0);
  CHECK(std::abs(r.joint_prob[0] - product) <= 3.0 * se);
  CHECK(r.joint_prob[0] >= 1.0 - opt.alpha);
}

TEST_CASE("excursions: all marginals below the level give an empty set") {
  const PosteriorField post = diagonal_posterior(Vector::Zero(5), Vector::Ones(5));
  const ExcursionResult r = excursion_set(post, Projector::identity(5), 0.0, ExcursionOptions{});
  CHECK(r.active.count() == 0);
  CHECK(r.joint_prob[0] == 1.0);
}

TEST_CASE("excursions: nesting, joint level and marginal containment on fits") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PosteriorField post = fitted_posterior(seed);
    ExcursionOptions opt;
    opt.samples = 2000;
    opt.seed = seed;
    const auto sets = excursion_sets(post, Projector::identity(64), {0.5, 0.0, 1.0}, opt);
    REQUIRE(sets.size() == 3);
    CHECK(sets[0].gamma == 0.5);
    const ExcursionResult &g0 = sets[1], &g05 = sets[0], &g1 = sets[2];
    CHECK((g05.active && !g0.active).count() == 0);
    CHECK((g1.active && !g05.active).count() == 0);
    for (const auto& s : sets) {
      for (Index k = 0; k < 2; ++k) {
        if (s.active.col(k).any()) CHECK(s.joint_prob[k] >= 1.0 - opt.alpha);
        for (Index v = 0; v < 64; ++v) {
          if (s.active(v, k)) CHECK(s.marginal_prob(v, k) >= 1.0 - opt.alpha);
        }
      }
    }
    CHECK(g0.active.count() > 0);
  }
}

TEST_CASE("excursions: reproducible, thread-independent and stable in the sample size") {
  const PosteriorField post = fitted_posterior(4);
  ExcursionOptions a;
  a.samples = 4000;
  a.threads = 1;
  a.alpha = 0.1;
  ExcursionOptions b = a;
  b.threads = 3;
  const auto ra = excursion_sets(post, Projector::identity(64), {0.0, 0.5}, a);
  const auto rb = excursion_sets(post, Projector::identity(64), {0.0, 0.5}, b);
  const auto rc = excursion_sets(post, Projector::identity(64), {0.0, 0.5}, a);
  for (std::size_t g = 0; g < 2; ++g) {
    CHECK((ra[g].active == rb[g].active).all());
    CHECK(ra[g].joint_prob == rb[g].joint_prob);
    CHECK(ra[g].joint_prob == rc[g].joint_prob);
  }
  // With a fixed candidate set, the joint probability estimate is stable in S.
  const Vector mu = (Vector(5) << 2.5, 2.6, 2.7, 2.8, 3.5).finished();
  const PosteriorField toy = diagonal_posterior(mu, Vector::Ones(5));
  ExcursionOptions small;
  small.alpha = 0.2;
  small.samples = 5000;
  ExcursionOptions big = small;
  big.samples = 10000;
  const ExcursionResult s1 = excursion_set(toy, Projector::identity(5), 0.0, small);
  const ExcursionResult s2 = excursion_set(toy, Projector::identity(5), 0.0, big);
  if ((s1.active == s2.active).all()) {
    CHECK(std::abs(s1.joint_prob[0] - s2.joint_prob[0]) < 3.0 / std::sqrt(5000.0));
  }
}

TEST_CASE("excursions: the projected field is thresholded") {
  const TriangularMesh mesh = grid_mesh(4, 4, 2.0);
  Eigen::MatrixX3d loc(3, 3);
  loc << 1.0, 1.0, 0.0, 3.0, 2.5, 0.0, 5.0, 5.0, 0.0;
  const Projector psi = build_projector(mesh, loc);
  const Vector mu = Vector::LinSpaced(16, 0.0, 6.0);
  const Vector sd = Vector::LinSpaced(16, 0.5, 1.0);
  const PosteriorField post = diagonal_posterior(mu, sd);
  Matrix mean, msd;
  projected_marginals(post, psi, mean, msd);
  const Matrix p = Matrix(psi.matrix());
  const Matrix cov = p * sd.cwiseAbs2().asDiagonal() * p.transpose();
  CHECK((mean.col(0) - p * mu).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((msd.col(0) - cov.diagonal().cwiseSqrt()).cwiseAbs().maxCoeff() < 1e-12);
  const ExcursionResult r = excursion_set(post, psi, 0.0, ExcursionOptions{});
  CHECK(r.active.rows() == 3);
  ExcursionOptions bad;
  bad.samples = 999;
  CHECK_THROWS_AS(excursion_set(post, psi, 0.0, bad), DomainError);
  bad = ExcursionOptions{};
  bad.alpha = 1.0;
  CHECK_THROWS_AS(excursion_set(post, psi, 0.0, bad), DomainError);
  CHECK_THROWS_AS(excursion_set(post, Projector::identity(5), 0.0, ExcursionOptions{}), DimensionError);
}

TEST_CASE("excursions from stored draws") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const Index N = 6, S = 3000;
  Matrix draws(2 * N, S);
  for (Index s = 0; s < S; ++s) {
    for (Index i = 0; i < 2 * N; ++i) draws(i, s) = (i < N ? 3.0 : 0.0) + 0.3 * i + n01(rng);
  }
  const auto sets = excursion_sets_from_draws(draws, 2, {1.0, 0.0}, 0.05);
  REQUIRE(sets.size() == 2);
  CHECK((sets[0].active && !sets[1].active).count() == 0);
  for (Index v = 0; v < N; ++v) {
    const double frac = (draws.row(v).array() > 0.0).cast<double>().mean();
    CHECK(sets[1].marginal_prob(v, 0) == doctest::Approx(frac));
  }
  CHECK(sets[1].active.col(0).count() > 0);
  CHECK_THROWS_AS(excursion_sets_from_draws(draws, 5, {0.0}, 0.05), DimensionError);
}
