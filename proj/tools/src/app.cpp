#include <sbglm_cli/commands.hpp>

#include <CLI11.hpp>

#include <map>

namespace sbglm::cli {

namespace {

void add_run_inputs(CLI::App* c, RunInputs& in) {
  c->add_option("--run", in.runs, "run directory written by simulate or preprocess (repeatable)");
  c->add_option("--bold", in.bold, "T x N BOLD CSV (repeatable, pairs with --design)");
  c->add_option("--design", in.design, "T x K or T x NK design CSV (repeatable)");
  c->add_option("--tasks", in.tasks, "number of tasks when a design is per-location")->check(CLI::NonNegativeNumber);
  c->add_flag("--prewhitened", in.prewhitened, "treat --bold/--design pairs as already prewhitened");
}

void add_seed(CLI::App* c, std::uint64_t& seed) {
  c->add_option("--seed", seed, "random seed")->capture_default_str();
}

}  // namespace

void register_commands(CLI::App& app) {
  app.require_subcommand(1);

  static SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "simulate surface fMRI data with known activation");
  s->add_option("--config", sim.config, "JSON configuration (keys mirror the simulator settings)");
  s->add_option("--out", sim.out, "output directory")->required();
  s->add_option("--seed", sim.seed, "random seed (overrides the config)")
      ->each([](const std::string&) { sim.seed_given = true; });
  s->callback([] { run_simulate(sim); });

  static PreprocessOptions pre;
  auto* p = app.add_subcommand("preprocess", "scale, convolve, regress nuisance and prewhiten one run");
  p->add_option("--mesh", pre.mesh, "mesh file")->required();
  p->add_option("--bold", pre.bold, "T x N BOLD CSV")->required();
  auto* design = p->add_option("--design", pre.design, "T x K convolved design CSV");
  auto* stim = p->add_option("--stimulus", pre.stimulus, "T x K stimulus indicators to convolve");
  design->excludes(stim);
  stim->excludes(design);
  p->add_option("--nuisance", pre.nuisance, "T x J nuisance regressors CSV");
  p->add_option("--out", pre.out, "output directory")->required();
  p->add_flag("--raw", pre.raw, "scale raw BOLD to percent signal change");
  p->add_option("--tr", pre.tr, "repetition time in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  p->add_option("--ar-order", pre.prewhiten.ar_order, "AR order")->capture_default_str()->check(CLI::NonNegativeNumber);
  p->add_option("--fwhm", pre.prewhiten.fwhm_mm, "surface smoothing FWHM of AR estimates in mm")
      ->capture_default_str();
  static const std::map<std::string, NonstationaryPolicy> policies{{"shrink", NonstationaryPolicy::Shrink},
                                                                    {"error", NonstationaryPolicy::Error}};
  p->add_option("--nonstationary", pre.prewhiten.nonstationary, "shrink or error")
      ->transform(CLI::CheckedTransformer(policies, CLI::ignore_case));
  p->add_option("--hrf-a1", pre.hrf.a1)->capture_default_str();
  p->add_option("--hrf-a2", pre.hrf.a2)->capture_default_str();
  p->add_option("--hrf-b1", pre.hrf.b1)->capture_default_str();
  p->add_option("--hrf-b2", pre.hrf.b2)->capture_default_str();
  p->add_option("--hrf-c", pre.hrf.c)->capture_default_str();
  add_seed(p, pre.seed);
  p->callback([] {
    if (pre.design.empty() && pre.stimulus.empty()) throw CLI::ValidationError("one of --design or --stimulus is required");
    run_preprocess(pre);
  });

  static ClassicalOptions cl;
  auto* c = app.add_subcommand("fit-classical", "massive univariate GLM");
  add_run_inputs(c, cl.inputs);
  c->add_option("--out", cl.out, "output directory")->required();
  c->add_option("--gamma", cl.gammas, "activation thresholds for t-tests");
  c->add_option("--alpha", cl.alpha, "significance level")->capture_default_str();
  c->add_flag("--bonferroni", cl.bonferroni, "Bonferroni correction instead of FDR");
  add_seed(c, cl.seed);
  c->callback([] { run_fit_classical(cl); });

  static FitEmOptions em;
  auto* e = app.add_subcommand("fit-em", "spatial Bayesian GLM by expectation maximization");
  e->add_option("--mesh", em.mesh, "mesh file")->required();
  e->add_option("--locations", em.locations, "N x 3 data locations CSV (defaults to the mesh vertices)");
  add_run_inputs(e, em.inputs);
  e->add_option("--out", em.out, "output directory")->required();
  e->add_option("--tolerance", em.tolerance, "stopping tolerance")->capture_default_str()->check(CLI::PositiveNumber);
  e->add_option("--max-iterations", em.max_iterations)->capture_default_str()->check(CLI::PositiveNumber);
  e->add_flag("--relative", em.relative_metric, "relative change stopping metric");
  e->add_flag("--no-accelerate", em.no_accelerate, "plain EM without extrapolation");
  e->add_flag("--tasks-parallel", em.tasks_parallel, "parallelize across tasks");
  e->add_flag("--joint-components", em.joint_components, "fit disconnected mesh components jointly");
  e->add_option("--hutchinson", em.hutchinson_probes, "trace estimate probes (0 uses exact traces)")
      ->capture_default_str();
  add_seed(e, em.seed);
  e->callback([] { run_fit_em(em); });

  static ExcursionsOptions ex;
  auto* x = app.add_subcommand("excursions", "joint posterior activation sets from an EM fit");
  x->add_option("--fit", ex.fit, "fit-em output directory")->required();
  x->add_option("--out", ex.out, "output directory")->required();
  x->add_option("--gamma", ex.gammas, "activation thresholds")->capture_default_str();
  x->add_option("--alpha", ex.alpha, "joint error probability")->capture_default_str();
  x->add_option("--samples", ex.samples, "Monte Carlo samples")->capture_default_str();
  add_seed(x, ex.seed);
  x->callback([] { run_excursions(ex); });

  static GroupCommandOptions gr;
  auto* g = app.add_subcommand("group", "combine subject fits");
  g->add_option("--subjects", gr.subjects, "directory of subject fit-em outputs")->required();
  g->add_option("--out", gr.out, "output directory")->required();
  g->add_option("--draws", gr.draws, "joint posterior draws")->capture_default_str();
  g->add_option("--gamma", gr.gammas, "activation thresholds")->capture_default_str();
  g->add_option("--alpha", gr.alpha, "joint error probability")->capture_default_str();
  g->add_option("--weights", gr.weights, "subject weights in sorted directory order");
  add_seed(g, gr.seed);
  g->callback([] { run_group(gr); });

  static BenchmarkOptions bm;
  auto* b = app.add_subcommand("benchmark", "compare the classical and EM fits on simulated data");
  b->add_option("--out", bm.out, "output directory")->required();
  b->add_option("--condition", bm.conditions, "vertices x tasks, e.g. 2000x2 (repeatable)")->capture_default_str();
  b->add_option("--replicates", bm.replicates)->capture_default_str();
  b->add_option("--tolerance", bm.tolerance)->capture_default_str();
  b->add_option("--timepoints", bm.timepoints)->capture_default_str();
  b->add_option("--sweep", bm.sweep, "EM tolerances for the tolerance study");
  b->add_option("--sweep-condition", bm.sweep_condition)->capture_default_str();
  b->add_option("--sweep-replicates", bm.sweep_replicates)->capture_default_str();
  add_seed(b, bm.seed);
  b->callback([] { run_benchmark(bm); });

  static PlotOptions pl;
  auto* f = app.add_subcommand("plot", "heatmaps of fields and activation maps");
  f->add_option("--mesh", pl.mesh, "mesh file")->required();
  f->add_option("--field", pl.fields, "N x K field CSV (repeatable, shared colour scale)");
  f->add_option("--sets", pl.sets, "N x K 0/1 activation CSVs in increasing threshold order");
  f->add_option("--limit", pl.limit, "colour scale limit (0 uses the largest magnitude)");
  f->add_option("--out", pl.out, "output directory")->required();
  add_seed(f, pl.seed);
  f->callback([] { run_plot(pl); });
}

}  // namespace sbglm::cli
