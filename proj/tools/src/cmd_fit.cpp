#include <sbglm_cli/artifacts.hpp>
#include <sbglm_cli/commands.hpp>

#include <sbglm/classical_glm.hpp>
#include <sbglm/em_engine.hpp>
#include <sbglm/error.hpp>
#include <sbglm/io.hpp>
#include <sbglm/parallel.hpp>

#include <fstream>
#include <sstream>

namespace sbglm::cli {

using nlohmann::json;

namespace {

std::vector<std::string> task_header(Index K) {
  std::vector<std::string> h;
  for (Index k = 0; k < K; ++k) h.push_back("task" + std::to_string(k));
  return h;
}

std::string gamma_tag(double g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

Matrix mask_matrix(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& a) { return a.cast<double>().matrix(); }

}  // namespace

std::vector<SessionData> load_runs(const RunInputs& in, Manifest& m) {
  std::vector<SessionData> runs;
  for (const auto& dir : in.runs) runs.push_back(read_run(dir, &m));
  if (in.bold.size() != in.design.size()) throw InputError("--bold and --design must be given the same number of times");
  if (!in.bold.empty() && in.tasks < 1) throw InputError("--tasks is required with --bold/--design");
  for (std::size_t r = 0; r < in.bold.size(); ++r) {
    m.add_input(in.bold[r]);
    m.add_input(in.design[r]);
    SessionData d;
    d.y = io::read_csv(in.bold[r]);
    d.x = io::read_design(in.design[r], in.tasks, d.y.cols());
    d.z = Matrix(d.y.rows(), 0);
    d.validate();
    runs.push_back(std::move(d));
  }
  if (runs.empty()) throw InputError("no input runs (use --run or --bold/--design)");
  if (in.prewhitened) {
    for (auto& r : runs) r.whitened = true;
  }
  return runs;
}

void run_preprocess(const PreprocessOptions& o) {
  Manifest m("preprocess", o.out, o.seed);
  m.config() = {{"raw", o.raw},
                {"tr", o.tr},
                {"hrf", {{"a1", o.hrf.a1}, {"a2", o.hrf.a2}, {"b1", o.hrf.b1}, {"b2", o.hrf.b2}, {"c", o.hrf.c}}},
                {"ar_order", o.prewhiten.ar_order},
                {"fwhm_mm", o.prewhiten.fwhm_mm},
                {"nonstationary", o.prewhiten.nonstationary == NonstationaryPolicy::Shrink ? "shrink" : "error"}};
  if (o.design.empty() == o.stimulus.empty()) throw InputError("give exactly one of --design or --stimulus");
  PrewhitenResult pw;
  {
    Stage s(m, "read");
    m.add_input(o.mesh);
    m.add_input(o.bold);
  }
  const TriangularMesh mesh = io::read_mesh(o.mesh);
  SessionData d;
  d.tr = o.tr;
  {
    Stage s(m, "scale");
    d.y = io::read_csv(o.bold);
    if (o.raw) d.y = scale_bold(d.y);
    Matrix x;
    if (!o.stimulus.empty()) {
      m.add_input(o.stimulus);
      HrfParams hrf = o.hrf;
      hrf.tr = o.tr;
      x = convolve_and_scale(io::read_csv(o.stimulus), hrf);
    } else {
      m.add_input(o.design);
      x = io::read_csv(o.design);
    }
    if (x.rows() != d.y.rows()) throw DimensionError("design and BOLD have different numbers of timepoints");
    if (!o.nuisance.empty()) {
      m.add_input(o.nuisance);
      const Matrix z = io::read_csv(o.nuisance);
      d.y = nuisance_regress(d.y, z);
      x = nuisance_regress(x, z);
    }
    m.config()["tasks"] = x.cols();
    d.x = Design(std::move(x));
    d.z = Matrix(d.y.rows(), 0);
  }
  {
    Stage s(m, "prewhiten");
    pw = prewhiten(d, mesh, o.prewhiten);
  }
  {
    Stage s(m, "write");
    write_run(m, "", pw.data);
    io::write_csv(m.path("ar_coefficients.csv"), pw.model.coefficients);
    m.add_output("ar_coefficients.csv");
    io::write_csv(m.path("innovation_variance.csv"), pw.model.innovation_variance, {"variance"});
    m.add_output("innovation_variance.csv");
    if (!pw.model.shrunk_locations.empty()) {
      m.warn(std::to_string(pw.model.shrunk_locations.size()) +
             " locations had nonstationary smoothed AR fits and were shrunk");
    }
  }
  m.write();
}

void run_fit_classical(const ClassicalOptions& o) {
  Manifest m("fit-classical", o.out, o.seed);
  m.config() = {{"gammas", o.gammas}, {"alpha", o.alpha}, {"bonferroni", o.bonferroni}};
  std::vector<SessionData> runs;
  ClassicalFit fit;
  {
    Stage s(m, "read");
    runs = load_runs(o.inputs, m);
  }
  {
    Stage s(m, "fit");
    fit = fit_classical(runs);
  }
  {
    Stage s(m, "write");
    const auto header = task_header(fit.tasks());
    io::write_csv(m.path("beta.csv"), fit.beta, header);
    io::write_csv(m.path("se.csv"), fit.se, header);
    io::write_csv(m.path("resid_var.csv"), fit.resid_var, {"resid_var"});
    Vector flags(fit.locations());
    Index deficient = 0;
    for (Index v = 0; v < fit.locations(); ++v) {
      flags[v] = fit.rank_deficient[v] ? 1.0 : 0.0;
      deficient += fit.rank_deficient[v];
    }
    io::write_csv(m.path("rank_deficient.csv"), flags, {"rank_deficient"});
    for (const char* f : {"beta.csv", "se.csv", "resid_var.csv", "rank_deficient.csv"}) m.add_output(f);
    if (deficient > 0) m.warn(std::to_string(deficient) + " locations have rank-deficient designs");
    for (double g : o.gammas) {
      const auto active =
          activation_ttest(fit, g, o.alpha, o.bonferroni ? Correction::Bonferroni : Correction::None);
      const std::string f = "active_gamma_" + gamma_tag(g) + ".csv";
      io::write_csv(m.path(f), mask_matrix(active), header);
      m.add_output(f);
    }
  }
  m.write();
}

void run_fit_em(const FitEmOptions& o) {
  Manifest m("fit-em", o.out, o.seed);
  EmConfig cfg;
  cfg.tolerance = o.tolerance;
  cfg.max_iterations = o.max_iterations;
  cfg.accelerate = !o.no_accelerate;
  cfg.metric = o.relative_metric ? StopMetric::Relative : StopMetric::Absolute;
  cfg.threads = o.tasks_parallel ? 0 : 1;
  cfg.init.threads = cfg.threads;
  if (o.hutchinson_probes > 0) {
    cfg.traces.hutchinson = true;
    cfg.traces.probes = o.hutchinson_probes;
    cfg.traces.seed = o.seed;
  }
  m.config() = {{"tolerance", o.tolerance},
                {"max_iterations", o.max_iterations},
                {"accelerate", cfg.accelerate},
                {"metric", o.relative_metric ? "relative" : "absolute"},
                {"tasks_parallel", o.tasks_parallel},
                {"split_components", !o.joint_components},
                {"hutchinson_probes", o.hutchinson_probes}};

  TriangularMesh mesh;
  Projector projector;
  std::vector<SessionData> runs;
  {
    Stage s(m, "read");
    m.add_input(o.mesh);
    mesh = io::read_mesh(o.mesh);
    projector = load_projector(mesh, o.locations, &m);
    runs = load_runs(o.inputs, m);
  }
  const Index K = runs[0].tasks();
  for (const auto& r : runs) {
    if (r.locations() != projector.num_locations()) {
      throw DimensionError("runs have " + std::to_string(r.locations()) + " locations but the projector has " +
                           std::to_string(projector.num_locations()));
    }
    if (r.tasks() != K) throw DimensionError("runs have different task counts");
  }
  const std::vector<Part> parts = make_parts(mesh, projector, !o.joint_components);
  std::vector<EmResult> results(parts.size());
  std::vector<PartFit> fits(parts.size());
  {
    Stage s(m, "fit");
    // Parts are independent; each runs EM on its own data.
    parallel_for(parts.size(), o.tasks_parallel ? 0 : 1, [&](std::size_t c) {
      std::vector<SessionData> local;
      for (const auto& r : runs) local.push_back(restrict_run(r, parts[c].locations));
      const SpdeStructure spde(assemble_fem(parts[c].mesh));
      results[c] = fit_em(local, spde, parts[c].projector, cfg, &fits[c].stats);
      fits[c].theta = results[c].theta;
    });
  }

  {
    Stage s(m, "write");
    Matrix mean(mesh.n(), K), beta(projector.num_locations(), K);
    std::ofstream trace(m.path("trace.csv"));
    trace << "part,evaluation,change,log_likelihood,seconds,extrapolated";
    for (Index k = 0; k < K; ++k) trace << ",kappa2_" << k;
    for (Index k = 0; k < K; ++k) trace << ",phi_" << k;
    trace << ",sigma2\n";
    trace.precision(17);
    json thetas = json::array();
    for (std::size_t c = 0; c < parts.size(); ++c) {
      const Part& p = parts[c];
      const EmResult& r = results[c];
      const Index n = p.mesh.n();
      for (Index k = 0; k < K; ++k) {
        const Vector w = r.posterior.task_mean(k);
        const Vector b = p.projector.apply(w);
        for (Index i = 0; i < n; ++i) mean(p.vertices[static_cast<std::size_t>(i)], k) = w[i];
        for (Index v = 0; v < b.size(); ++v) beta(p.locations[static_cast<std::size_t>(v)], k) = b[v];
      }
      for (const auto& it : r.trace.iterations) {
        trace << c << ',' << it.evaluation << ',' << it.change << ',' << it.log_likelihood << ',' << it.seconds << ','
              << (it.extrapolated ? 1 : 0);
        for (double v : it.theta.kappa2) trace << ',' << v;
        for (double v : it.theta.phi) trace << ',' << v;
        trace << ',' << it.theta.sigma2 << '\n';
      }
      for (const auto& w : r.trace.warnings) m.warn("part " + std::to_string(c) + ": " + w);
      if (!r.trace.converged) m.warn("part " + std::to_string(c) + ": EM did not converge");
      write_part_fit(m, static_cast<int>(c), p, fits[c]);
      thetas.push_back(json::parse(io::theta_to_json(r.theta)));
      m.record_stage("em_part" + std::to_string(c), r.trace.seconds);
    }
    trace.close();
    m.add_output("trace.csv");
    const auto header = task_header(K);
    io::write_csv(m.path("posterior_mean.csv"), mean, header);
    io::write_csv(m.path("beta.csv"), beta, header);
    io::write_text(m.path("theta.json"), (parts.size() == 1 ? thetas[0] : thetas).dump(2) + "\n");
    io::write_mesh(m.path("mesh.txt"), mesh);
    for (const char* f : {"posterior_mean.csv", "beta.csv", "theta.json", "mesh.txt"}) m.add_output(f);
    if (!o.locations.empty()) {
      io::write_csv(m.path("locations.csv"), io::read_csv(o.locations), {"x", "y", "z"});
      m.add_output("locations.csv");
    }
    json meta{{"parts", parts.size()}, {"tasks", K}, {"vertices", mesh.n()}, {"locations", projector.num_locations()}};
    double tn = 0.0;
    for (const auto& f : fits) tn += f.stats.tn;
    meta["observations"] = tn;
    io::write_text(m.path("fit.json"), meta.dump(2) + "\n");
    m.add_output("fit.json");
  }
  m.write();
}

}  // namespace sbglm::cli
