#include <sbglm/group_level.hpp>

#include <sbglm/error.hpp>
#include <sbglm/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sbglm {

GroupResult combine_subjects(const std::vector<SubjectSummary>& subjects, const SpdeStructure& spde,
                             const Projector& projector, const GroupOptions& options) {
  const std::size_t M = subjects.size();
  if (M < 2) throw DimensionError("combine_subjects: at least two subjects are required");
  if (options.draws < 100) throw DomainError("combine_subjects: at least 100 draws are required");
  const Index n = spde.n(), K = subjects[0].stats.tasks;
  for (std::size_t m = 0; m < M; ++m) {
    const auto& s = subjects[m];
    const std::string who = s.name.empty() ? "subject " + std::to_string(m) : "subject '" + s.name + "'";
    if (s.stats.n != n || s.stats.tasks != K) throw DimensionError("combine_subjects: " + who + " has a different mesh or task count");
    if (s.theta.tasks() != K) throw DimensionError("combine_subjects: " + who + " has Theta for a different task count");
    s.theta.validate();
    if (s.weight < 0.0) throw DomainError("combine_subjects: " + who + " has a negative weight");
  }
  if (projector.num_vertices() != n) throw DimensionError("combine_subjects: projector does not match the mesh");

  GroupResult out;
  std::vector<double> w(M);
  for (std::size_t m = 0; m < M; ++m) w[m] = subjects[m].weight > 0.0 ? subjects[m].weight : subjects[m].stats.tn;
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  const double wmax = *std::max_element(w.begin(), w.end());
  if (!(wsum > 0.0)) throw DomainError("combine_subjects: weights sum to zero");
  out.weights.resize(M);
  for (std::size_t m = 0; m < M; ++m) out.weights[m] = w[m] / wsum;

  // log-scale weighted mean and between-subject variance
  const Index P = 2 * K + 1;
  out.log_theta_mean = Vector::Zero(P);
  for (std::size_t m = 0; m < M; ++m) {
    out.log_theta_mean += out.weights[m] * Vector(subjects[m].theta.pack().array().log());
  }
  out.log_theta_variance = Vector::Zero(P);
  for (std::size_t m = 0; m < M; ++m) {
    const Vector d = Vector(subjects[m].theta.pack().array().log()) - out.log_theta_mean;
    out.log_theta_variance += out.weights[m] * d.cwiseAbs2();
  }
  out.log_theta_draw_sd = (out.log_theta_variance / static_cast<double>(M)).cwiseSqrt();
  // rounding residue from identical subjects
  for (Index i = 0; i < P; ++i) {
    if (out.log_theta_draw_sd[i] < 1e-12) out.log_theta_draw_sd[i] = 0.0;
  }
  out.theta_mean = Hyperparameters::unpack(out.log_theta_mean.array().exp().matrix());

  // pooled statistics, each subject scaled by w_m / max w
  std::vector<SufficientStats> scaled;
  scaled.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    SufficientStats s = subjects[m].stats;
    const double f = w[m] / wmax;
    s.xtx *= f;
    s.xty *= f;
    s.yty *= f;
    s.tn *= f;
    scaled.push_back(std::move(s));
  }
  const SufficientStats pooled = pool(scaled);

  const Index S = options.draws;
  std::mt19937_64 theta_rng(options.seed);
  std::normal_distribution<double> normal;
  out.theta_draws.reserve(static_cast<std::size_t>(S));
  for (Index s = 0; s < S; ++s) {
    Vector u = out.log_theta_mean;
    for (Index i = 0; i < P; ++i) u[i] += out.log_theta_draw_sd[i] * normal(theta_rng);
    out.theta_draws.push_back(Hyperparameters::unpack(u.array().exp().matrix()));
  }

  {
    PosteriorSystem system(pooled, spde);
    out.posterior_mean = system.posterior(out.theta_mean, false).mu;
  }

  const Index N = projector.num_locations();
  out.beta_draws.resize(N * K, S);
  const bool identity = projector.is_identity();
  const RowSparseMatrix& psi = projector.matrix();
  const int workers = std::max(1, options.threads > 0 ? options.threads : default_threads());
  const Index per = (S + workers - 1) / workers;
  parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t wi) {
    const Index s0 = static_cast<Index>(wi) * per, s1 = std::min(S, s0 + per);
    if (s0 >= s1) return;
    PosteriorSystem system(pooled, spde);
    PosteriorField post;
    const Hyperparameters* last = nullptr;
    for (Index s = s0; s < s1; ++s) {
      const Hyperparameters& th = out.theta_draws[s];
      if (!last || th.pack() != last->pack()) {
        post = PosteriorField{};
        post = system.posterior(th, false);
        last = &th;
      }
      std::mt19937_64 rng(options.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(s) + 1);
      std::normal_distribution<double> nd;
      Vector z(n * K);
      for (Index i = 0; i < z.size(); ++i) z[i] = nd(rng);
      const Vector wdraw = post.mu + post.factor->sample(z);
      if (identity) {
        out.beta_draws.col(s) = wdraw;
      } else {
        for (Index k = 0; k < K; ++k) out.beta_draws.col(s).segment(k * N, N) = psi * wdraw.segment(k * n, n);
      }
    }
  });

  if (options.excursions && !options.gammas.empty()) {
    out.excursions = excursion_sets_from_draws(out.beta_draws, K, options.gammas, options.alpha);
  }
  return out;
}

}  // namespace sbglm
