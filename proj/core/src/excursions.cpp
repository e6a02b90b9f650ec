#include <sbglm/excursions.hpp>

#include <sbglm/error.hpp>
#include <sbglm/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <unordered_map>

namespace sbglm {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Sampler = std::function<void(Index sample, Vector& out)>;

// Core construction shared by the Gaussian and the stored-draw variants.
// `marginals[g]` is N x K for gammas[g]; `draw(s, out)` fills the N K
// projected field of sample s.
std::vector<ExcursionResult> build_sets(const std::vector<double>& gammas, const std::vector<Matrix>& marginals,
                                        Index N, Index K, Index S, double alpha, const Sampler& draw,
                                        int threads) {
  std::vector<std::size_t> order(gammas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gammas[a] > gammas[b]; });

  std::vector<ExcursionResult> out(gammas.size());
  std::vector<std::vector<int>> previous(static_cast<std::size_t>(K));  // higher-gamma set in order

  for (std::size_t gi : order) {
    const double gamma = gammas[gi];
    const Matrix& marg = marginals[gi];
    ExcursionResult& res = out[gi];
    res.gamma = gamma;
    res.alpha = alpha;
    res.samples = S;
    res.marginal_prob = marg;
    res.active = ActivationMask::Constant(N, K, false);
    res.joint_prob.assign(static_cast<std::size_t>(K), 1.0);

    // candidate order per task
    std::vector<std::vector<int>> cand(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k) {
      std::vector<char> used(static_cast<std::size_t>(N), 0);
      auto& c = cand[k];
      for (int v : previous[k]) {
        c.push_back(v);
        used[v] = 1;
      }
      std::vector<int> rest;
      for (Index v = 0; v < N; ++v) {
        if (!used[v] && marg(v, k) >= 1.0 - alpha) rest.push_back(static_cast<int>(v));
      }
      std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return marg(a, k) > marg(b, k); });
      c.insert(c.end(), rest.begin(), rest.end());
    }

    // hist[k][L]: samples whose leading run above gamma has length exactly L
    const Index chunk = 64;
    const Index chunks = (S + chunk - 1) / chunk;
    std::vector<std::vector<std::vector<Index>>> partial(
        static_cast<std::size_t>(chunks), std::vector<std::vector<Index>>(static_cast<std::size_t>(K)));
    parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t ci) {
      Vector beta;
      auto& hist = partial[ci];
      for (Index k = 0; k < K; ++k) hist[k].assign(cand[k].size() + 1, 0);
      const Index s0 = static_cast<Index>(ci) * chunk, s1 = std::min(S, s0 + chunk);
      for (Index s = s0; s < s1; ++s) {
        draw(s, beta);
        for (Index k = 0; k < K; ++k) {
          std::size_t len = 0;
          const auto& c = cand[k];
          while (len < c.size() && beta[k * N + c[len]] > gamma) ++len;
          ++hist[k][len];
        }
      }
    });

    for (Index k = 0; k < K; ++k) {
      const std::size_t m = cand[k].size();
      std::vector<Index> hist(m + 1, 0);
      for (const auto& p : partial) {
        for (std::size_t l = 0; l <= m; ++l) hist[l] += p[k][l];
      }
      // survival count: samples with run length >= L
      Index at_least = 0;
      std::size_t best = 0;
      double best_prob = 1.0;
      std::vector<Index> surv(m + 2, 0);
      for (std::size_t l = m + 1; l-- > 0;) {
        at_least += hist[l];
        surv[l] = at_least;
      }
      for (std::size_t l = m; l >= 1; --l) {
        const double p = static_cast<double>(surv[l]) / static_cast<double>(S);
        if (p >= 1.0 - alpha) {
          best = l;
          best_prob = p;
          break;
        }
      }
      // nesting: the higher-gamma prefix always qualifies at a lower gamma
      if (best < previous[k].size()) {
        best = previous[k].size();
        best_prob = static_cast<double>(surv[best]) / static_cast<double>(S);
      }
      std::vector<int> chosen(cand[k].begin(), cand[k].begin() + static_cast<std::ptrdiff_t>(best));
      for (int v : chosen) res.active(v, k) = true;
      res.joint_prob[k] = best_prob;
      previous[k] = std::move(chosen);
    }
  }
  return out;
}

}  // namespace

void projected_marginals(const PosteriorField& post, const Projector& projector, Matrix& mean, Matrix& sd) {
  if (!post.factor) throw NumericalError("excursions: posterior has no factorization");
  const Index n = post.n, K = post.tasks;
  if (projector.num_vertices() != n) throw DimensionError("excursions: projector does not match the mesh");
  SelectedInverse computed;
  const SelectedInverse* sel = &post.selected_cov;
  if (!post.has_selected_cov()) {
    computed = post.factor->selected_inverse();
    sel = &computed;
  }
  const Index N = projector.num_locations();
  mean.resize(N, K);
  sd.resize(N, K);
  const RowSparseMatrix& psi = projector.matrix();
  // entries outside the factor pattern come from explicit column solves
  std::unordered_map<Index, Vector> columns;
  auto cov = [&](Index i, Index j) {
    if (sel->contains(i, j)) return (*sel)(i, j);
    auto it = columns.find(j);
    if (it == columns.end()) {
      Vector e = Vector::Zero(n * K);
      e[j] = 1.0;
      it = columns.emplace(j, post.factor->solve(e)).first;
    }
    return it->second[i];
  };
  for (Index k = 0; k < K; ++k) {
    for (Index v = 0; v < N; ++v) {
      double m = 0.0, var = 0.0;
      for (RowSparseMatrix::InnerIterator a(psi, v); a; ++a) {
        m += a.value() * post.mu[k * n + a.col()];
        for (RowSparseMatrix::InnerIterator b(psi, v); b; ++b) {
          var += a.value() * b.value() * cov(k * n + a.col(), k * n + b.col());
        }
      }
      if (!(var > 0.0)) throw NumericalError("excursions: degenerate posterior variance at location " + std::to_string(v));
      mean(v, k) = m;
      sd(v, k) = std::sqrt(var);
    }
  }
}

std::vector<ExcursionResult> excursion_sets(const PosteriorField& post, const Projector& projector,
                                            const std::vector<double>& gammas, const ExcursionOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw DomainError("excursions: alpha must lie in (0, 1)");
  if (options.samples < 1000) throw DomainError("excursions: at least 1000 samples are required");
  Matrix mean, sd;
  projected_marginals(post, projector, mean, sd);
  const Index N = mean.rows(), K = mean.cols(), n = post.n;
  std::vector<Matrix> marginals;
  for (double g : gammas) {
    Matrix p(N, K);
    for (Index k = 0; k < K; ++k) {
      for (Index v = 0; v < N; ++v) p(v, k) = 0.5 * std::erfc((g - mean(v, k)) / (sd(v, k) * std::sqrt(2.0)));
    }
    marginals.push_back(std::move(p));
  }
  const auto factor = post.factor;
  const Vector& mu = post.mu;
  const bool identity = projector.is_identity();
  const RowSparseMatrix& psi = projector.matrix();
  Sampler draw = [&](Index s, Vector& out) {
    std::mt19937_64 rng(splitmix(options.seed ^ splitmix(static_cast<std::uint64_t>(s))));
    std::normal_distribution<double> normal;
    Vector z(n * K);
    for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    const Vector w = mu + factor->sample(z);
    if (identity) {
      out = w;
      return;
    }
    out.resize(N * K);
    for (Index k = 0; k < K; ++k) out.segment(k * N, N) = psi * w.segment(k * n, n);
  };
  return build_sets(gammas, marginals, N, K, options.samples, options.alpha, draw, options.threads);
}

ExcursionResult excursion_set(const PosteriorField& post, const Projector& projector, double gamma,
                              const ExcursionOptions& options) {
  return excursion_sets(post, projector, {gamma}, options).front();
}

std::vector<ExcursionResult> excursion_sets_from_draws(const Matrix& draws, Index tasks,
                                                       const std::vector<double>& gammas, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("excursions: alpha must lie in (0, 1)");
  if (tasks < 1 || draws.rows() % tasks != 0) throw DimensionError("excursions: draws rows not divisible by tasks");
  const Index S = draws.cols();
  if (S < 1) throw DomainError("excursions: no draws");
  const Index N = draws.rows() / tasks;
  std::vector<Matrix> marginals;
  for (double g : gammas) {
    Matrix p(N, tasks);
    for (Index k = 0; k < tasks; ++k) {
      for (Index v = 0; v < N; ++v) {
        p(v, k) = static_cast<double>((draws.row(k * N + v).array() > g).count()) / static_cast<double>(S);
      }
    }
    marginals.push_back(std::move(p));
  }
  Sampler draw = [&](Index s, Vector& out) { out = draws.col(s); };
  return build_sets(gammas, marginals, N, tasks, S, alpha, draw, 1);
}

}  // namespace sbglm
