#include <doctest.h>

#include <sbglm/em_engine.hpp>
#include <sbglm/error.hpp>
#include <sbglm/group_level.hpp>

#include "test_util.hpp"

#include <cmath>

using namespace sbglm;

namespace {

struct Setup {
  TriangularMesh mesh = grid_mesh(6, 6, 2.0);
  SpdeStructure spde{assemble_fem(mesh)};
  Projector psi = Projector::identity(36);
};

SubjectSummary subject(const std::string& name, std::uint64_t seed, const Hyperparameters& theta, double weight = 0) {
  SessionData d = testing::random_session(40, 36, 2, false, seed);
  d.y.col(3) += 2.0 * d.x.at(3).col(0);
  return SubjectSummary{name, compute_sufficient_stats(d, Projector::identity(36)), theta, weight};
}

const Hyperparameters kTheta{{0.5, 1.5}, {0.05, 0.2}, 1.2};

}  // namespace

TEST_CASE("group: weighted log-mean hand value") {
  const Setup s;
  Hyperparameters a = kTheta, b = kTheta;
  a.kappa2[0] = 1.0;
  b.kappa2[0] = 16.0;
  GroupOptions opt;
  opt.draws = 100;
  opt.excursions = false;
  const GroupResult g = combine_subjects({subject("a", 1, a, 1.0), subject("b", 2, b, 3.0)}, s.spde, s.psi, opt);
  CHECK(g.theta_mean.kappa2[0] == doctest::Approx(8.0));
  CHECK(g.weights[0] == doctest::Approx(0.25));
  CHECK(g.weights[1] == doctest::Approx(0.75));
  CHECK(g.theta_mean.kappa2[1] == doctest::Approx(1.5));
  // weighted variance of (0, log 16) with weights (1/4, 3/4)
  const double l = std::log(16.0);
  CHECK(g.log_theta_variance[0] == doctest::Approx(0.25 * 0.75 * l * l));
  CHECK(g.log_theta_draw_sd[0] == doctest::Approx(std::sqrt(0.25 * 0.75 * l * l / 2.0)));
  CHECK(g.log_theta_variance[1] == doctest::Approx(0.0));
  CHECK(g.theta_draws.size() == 100);
  CHECK(g.beta_draws.cols() == 100);
  CHECK(g.excursions.empty());
}

TEST_CASE("group: identical subjects collapse to the pooled posterior") {
  const Setup s;
  const SubjectSummary one = subject("s", 3, kTheta);
  GroupOptions opt;
  opt.draws = 400;
  const GroupResult g = combine_subjects({one, one, one}, s.spde, s.psi, opt);
  CHECK(g.log_theta_variance.cwiseAbs().maxCoeff() < 1e-20);
  for (const auto& t : g.theta_draws) CHECK(t.pack() == g.theta_mean.pack());
  for (Index i = 0; i < 5; ++i) CHECK(g.theta_mean.pack()[i] == doctest::Approx(kTheta.pack()[i]));

  const SufficientStats pooled = pool({one.stats, one.stats, one.stats});
  const PosteriorField post = e_step(pooled, g.theta_mean, s.spde);
  CHECK((g.posterior_mean - post.mu).cwiseAbs().maxCoeff() < 1e-10);
  const Vector mean = g.beta_draws.rowwise().mean();
  const Vector var = (g.beta_draws.colwise() - mean).cwiseAbs2().rowwise().sum() / (opt.draws - 1.0);
  const Vector sd = post.selected_cov.diagonal().cwiseSqrt();
  CHECK(((mean - post.mu).array() / sd.array()).abs().maxCoeff() < 4.5 / std::sqrt(double(opt.draws)));
  CHECK((var.array() / sd.array().square() - 1.0).abs().mean() < 0.15);
  REQUIRE(g.excursions.size() == 3);
  CHECK((g.excursions[2].active && !g.excursions[1].active).count() == 0);
  CHECK((g.excursions[1].active && !g.excursions[0].active).count() == 0);
}

TEST_CASE("group: invariant to subject order") {
  const Setup s;
  Hyperparameters b = kTheta;
  b.kappa2 = {0.9, 1.1};
  b.sigma2 = 0.8;
  const SubjectSummary x = subject("x", 4, kTheta), y = subject("y", 5, b, 2.0 * 40 * 36);
  GroupOptions opt;
  opt.draws = 100;
  const GroupResult g1 = combine_subjects({x, y}, s.spde, s.psi, opt);
  const GroupResult g2 = combine_subjects({y, x}, s.spde, s.psi, opt);
  for (Index i = 0; i < 5; ++i) CHECK(g1.log_theta_mean[i] == doctest::Approx(g2.log_theta_mean[i]).epsilon(1e-12));
  CHECK((g1.posterior_mean - g2.posterior_mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((g1.beta_draws - g2.beta_draws).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("group: a dominant weight recovers that subject") {
  const Setup s;
  Hyperparameters b = kTheta;
  b.kappa2 = {3.0, 0.2};
  b.phi = {0.5, 0.01};
  const SubjectSummary x = subject("x", 6, kTheta, 1e6), y = subject("y", 7, b, 1.0);
  GroupOptions opt;
  opt.draws = 100;
  opt.excursions = false;
  const GroupResult g = combine_subjects({x, y}, s.spde, s.psi, opt);
  const PosteriorField px = e_step(x.stats, kTheta, s.spde);
  CHECK((g.posterior_mean - px.mu).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, px.mu.cwiseAbs().maxCoeff()));
}

TEST_CASE("group: input validation names the subject") {
  const Setup s;
  const SubjectSummary x = subject("alpha", 8, kTheta);
  CHECK_THROWS_AS(combine_subjects({x}, s.spde, s.psi), DimensionError);
  GroupOptions few;
  few.draws = 50;
  CHECK_THROWS_AS(combine_subjects({x, x}, s.spde, s.psi, few), DomainError);
  SubjectSummary bad = subject("beta", 9, kTheta);
  bad.theta.kappa2.pop_back();
  bad.theta.phi.pop_back();
  try {
    combine_subjects({x, bad}, s.spde, s.psi);
    FAIL("expected an error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
}
