#include <benchmark/benchmark.h>

#include <sbglm/em_engine.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/simulator.hpp>
#include <sbglm/sparse_cholesky.hpp>
#include <sbglm/spde_prior.hpp>
#include <sbglm/sufficient_stats.hpp>

#include <map>
#include <memory>

using namespace sbglm;

namespace {

// Posterior precision of a K-task model, the matrix the E-step factorizes.
SparseMatrix posterior_precision(const SpdeStructure& spde, const SufficientStats& stats, const Hyperparameters& t) {
  const Index n = spde.n();
  std::vector<Eigen::Triplet<double>> trip;
  for (Index k = 0; k < stats.tasks; ++k) {
    const SparseMatrix q = build_qtilde(t.kappa2[k], spde.fem()) * (kC1 / t.phi[k]);
    for (Index j = 0; j < q.outerSize(); ++j) {
      for (SparseMatrix::InnerIterator it(q, j); it; ++it) trip.emplace_back(k * n + it.row(), k * n + j, it.value());
    }
  }
  SparseMatrix p(n * stats.tasks, n * stats.tasks);
  p.setFromTriplets(trip.begin(), trip.end());
  p += stats.xtx / t.sigma2;
  return p;
}

struct Fixture {
  Simulation sim;
  SpdeStructure spde;
  SufficientStats stats;
  Hyperparameters theta;

  explicit Fixture(Index n)
      : sim(simulate([n] {
          SimConfig c;
          c.n_vertices = n;
          c.timepoints = 200;
          return c;
        }())),
        spde(assemble_fem(sim.mesh)),
        stats(compute_sufficient_stats(sim.runs[0], Projector::identity(sim.mesh.n()))),
        theta{{0.1, 0.1}, {0.05, 0.05}, 1.0} {}
};

const Fixture& fixture(Index n) {
  static std::map<Index, std::unique_ptr<Fixture>> cache;
  auto& f = cache[n];
  if (!f) f = std::make_unique<Fixture>(n);
  return *f;
}

void BM_AssembleFem(benchmark::State& state) {
  const TriangularMesh mesh = grid_mesh(Index(state.range(0)), 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(assemble_fem(mesh));
  state.counters["vertices"] = double(mesh.n());
}

void BM_Factorize(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  const SparseMatrix p = posterior_precision(f.spde, f.stats, f.theta);
  SparseCholesky chol;
  chol.analyze(p);
  for (auto _ : state) {
    chol.factorize(p);
    benchmark::ClobberMemory();
  }
  state.counters["factor_nnz"] = double(chol.factor_nonzeros());
}

void BM_SelectedInverse(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  SparseCholesky chol;
  chol.compute(posterior_precision(f.spde, f.stats, f.theta));
  for (auto _ : state) benchmark::DoNotOptimize(chol.selected_inverse());
}

void BM_EStep(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(e_step(f.stats, f.theta, f.spde));
}

}  // namespace

BENCHMARK(BM_AssembleFem)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Factorize)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SelectedInverse)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStep)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
