#include <sbglm_cli/artifacts.hpp>
#include <sbglm_cli/commands.hpp>

#include <sbglm/classical_glm.hpp>
#include <sbglm/em_engine.hpp>
#include <sbglm/error.hpp>
#include <sbglm/figures.hpp>
#include <sbglm/io.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>

namespace sbglm::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Condition {
  std::string label;
  Index n = 0;
  Index tasks = 0;
};

Condition parse_condition(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t a = 0, b = 0;
    const long n = std::stol(s.substr(0, x), &a);
    const long k = std::stol(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1 || n < 4 || k < 1) throw std::invalid_argument(s);
    return {s, n, k};
  } catch (const std::exception&) {
    throw InputError("condition must look like 2000x2 (vertices x tasks): '" + s + "'");
  }
}

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string clean(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

SimConfig config_for(const Condition& c, Index timepoints, std::uint64_t seed) {
  SimConfig s;
  s.n_vertices = c.n;
  s.tasks = c.tasks;
  s.timepoints = timepoints;
  s.seed = seed;
  return s;
}

Matrix mesh_field(const Vector& mu, Index n, Index K) { return Eigen::Map<const Matrix>(mu.data(), n, K); }

}  // namespace

void run_benchmark(const BenchmarkOptions& o) {
  Manifest m("benchmark", o.out, o.seed);
  m.config() = {{"conditions", o.conditions}, {"replicates", o.replicates}, {"tolerance", o.tolerance},
                {"timepoints", o.timepoints}, {"sweep", o.sweep}, {"sweep_condition", o.sweep_condition},
                {"sweep_replicates", o.sweep_replicates}};
  std::vector<Condition> conditions;
  for (const auto& s : o.conditions) conditions.push_back(parse_condition(s));
  if (o.replicates < 1) throw DomainError("--replicates must be positive");

  // Fitting time excludes simulation; the runs are already prewhitened.
  std::ofstream results(m.path("results.csv"));
  results << "condition,n,tasks,replicate,fitter,seconds,rmse,evaluations,status\n";
  results.precision(10);
  Matrix mean_time = Matrix::Zero(static_cast<Index>(conditions.size()), 2);
  Matrix counts = mean_time;
  std::vector<std::vector<double>> rmse_samples(2 * conditions.size());
  bool heatmaps = false;
  {
    Stage stage(m, "conditions");
    for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
      const Condition& c = conditions[ci];
      for (int r = 0; r < o.replicates; ++r) {
        const std::uint64_t seed = o.seed + 1000 * ci + static_cast<std::uint64_t>(r);
        std::string status = "ok";
        try {
          const Simulation sim = simulate(config_for(c, o.timepoints, seed));
          const Index n = sim.mesh.n();
          auto t0 = Clock::now();
          const ClassicalFit cl = fit_classical(sim.runs);
          const double t_cl = since(t0);
          const double r_cl = rmse(cl.beta, sim.truth.beta);
          results << c.label << ',' << n << ',' << c.tasks << ',' << r << ",classical," << t_cl << ',' << r_cl
                  << ",0,ok\n";
          mean_time(static_cast<Index>(ci), 0) += t_cl;
          counts(static_cast<Index>(ci), 0) += 1;
          rmse_samples[2 * ci].push_back(r_cl);

          const SpdeStructure spde(assemble_fem(sim.mesh));
          EmConfig cfg;
          cfg.tolerance = o.tolerance;
          t0 = Clock::now();
          const EmResult em = fit_em(sim.runs, spde, Projector::identity(n), cfg);
          const double t_em = since(t0);
          const Matrix est = mesh_field(em.posterior.mu, n, c.tasks);
          const double r_em = rmse(est, sim.truth.beta);
          results << c.label << ',' << n << ',' << c.tasks << ',' << r << ",em," << t_em << ',' << r_em << ','
                  << em.trace.evaluations << ',' << (em.trace.converged ? "ok" : "not converged") << '\n';
          mean_time(static_cast<Index>(ci), 1) += t_em;
          counts(static_cast<Index>(ci), 1) += 1;
          rmse_samples[2 * ci + 1].push_back(r_em);

          if (!heatmaps) {
            heatmaps = true;
            const double limit = sim.truth.beta.cwiseAbs().maxCoeff();
            const std::vector<std::pair<std::string, Vector>> maps{
                {"truth", sim.truth.beta.col(0)}, {"em", est.col(0)}, {"classical", cl.beta.col(0)}};
            for (const auto& [name, field] : maps) {
              const std::string f = "heatmap_" + name + ".ppm";
              field_heatmap(sim.mesh, field, limit).write_ppm(m.path(f));
              m.add_output(f);
            }
          }
        } catch (const std::exception& e) {
          status = clean(e.what());
          results << c.label << ',' << c.n << ',' << c.tasks << ',' << r << ",failed,0,0,0," << status << '\n';
          m.warn("condition " + c.label + " replicate " + std::to_string(r) + ": " + e.what());
        }
        results.flush();
      }
    }
  }
  results.close();
  m.add_output("results.csv");

  std::ofstream summary(m.path("summary.csv"));
  summary << "condition,fitter,mean_seconds,mean_rmse,replicates\n";
  summary.precision(10);
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    for (int f = 0; f < 2; ++f) {
      const auto& s = rmse_samples[2 * ci + f];
      double mr = 0;
      for (double v : s) mr += v / static_cast<double>(s.size());
      const double cnt = counts(static_cast<Index>(ci), f);
      if (cnt > 0) mean_time(static_cast<Index>(ci), f) /= cnt;
      summary << conditions[ci].label << ',' << (f == 0 ? "classical" : "em") << ','
              << mean_time(static_cast<Index>(ci), f) << ',' << (s.empty() ? 0.0 : mr) << ',' << s.size() << '\n';
    }
  }
  summary.close();
  m.add_output("summary.csv");
  bar_chart(mean_time).write_ppm(m.path("time_bars.ppm"));
  box_plot(rmse_samples, 2).write_ppm(m.path("rmse_boxes.ppm"));
  m.add_output("time_bars.ppm");
  m.add_output("rmse_boxes.ppm");

  if (!o.sweep.empty()) {
    Stage stage(m, "tolerance_sweep");
    const Condition c = parse_condition(o.sweep_condition);
    const Index T = static_cast<Index>(o.sweep.size());
    Matrix time = Matrix::Zero(T, 1), err = Matrix::Zero(T, 1), evals = Matrix::Zero(T, 1);
    std::ofstream sweep(m.path("sweep.csv"));
    sweep << "dataset,tolerance,seconds,rmse,evaluations,converged\n";
    sweep.precision(10);
    int done = 0;
    for (int d = 0; d < o.sweep_replicates; ++d) {
      try {
        const Simulation sim = simulate(config_for(c, o.timepoints, o.seed + 50000 + static_cast<std::uint64_t>(d)));
        const Index n = sim.mesh.n();
        const SpdeStructure spde(assemble_fem(sim.mesh));
        std::vector<std::array<double, 3>> rows;
        for (Index t = 0; t < T; ++t) {
          EmConfig cfg;
          cfg.tolerance = o.sweep[static_cast<std::size_t>(t)];
          const auto t0 = Clock::now();
          const EmResult em = fit_em(sim.runs, spde, Projector::identity(n), cfg);
          const double secs = since(t0);
          const double e = rmse(mesh_field(em.posterior.mu, n, c.tasks), sim.truth.beta);
          sweep << d << ',' << cfg.tolerance << ',' << secs << ',' << e << ',' << em.trace.evaluations << ','
                << em.trace.converged << '\n';
          rows.push_back({secs, e, double(em.trace.evaluations)});
        }
        for (Index t = 0; t < T; ++t) {
          time(t, 0) += rows[static_cast<std::size_t>(t)][0];
          err(t, 0) += rows[static_cast<std::size_t>(t)][1];
          evals(t, 0) += rows[static_cast<std::size_t>(t)][2];
        }
        ++done;
      } catch (const std::exception& e) {
        sweep << d << ",0,0,0,0,failed: " << clean(e.what()) << '\n';
        m.warn("sweep dataset " + std::to_string(d) + ": " + e.what());
      }
      sweep.flush();
    }
    sweep.close();
    m.add_output("sweep.csv");
    if (done > 0) {
      time /= done;
      err /= done;
      evals /= done;
    }
    std::ofstream ss(m.path("sweep_summary.csv"));
    ss << "tolerance,mean_seconds,mean_rmse,mean_evaluations,datasets\n";
    ss.precision(10);
    for (Index t = 0; t < T; ++t) {
      ss << o.sweep[static_cast<std::size_t>(t)] << ',' << time(t, 0) << ',' << err(t, 0) << ',' << evals(t, 0) << ','
         << done << '\n';
    }
    ss.close();
    m.add_output("sweep_summary.csv");
    bar_chart(time).write_ppm(m.path("sweep_time.ppm"));
    bar_chart(err).write_ppm(m.path("sweep_rmse.ppm"));
    m.add_output("sweep_time.ppm");
    m.add_output("sweep_rmse.ppm");
  }
  m.write();
}

void run_plot(const PlotOptions& o) {
  std::vector<std::string> missing;
  for (const auto& f : std::vector<std::string>{o.mesh}) {
    if (!fs::exists(f)) missing.push_back(f);
  }
  for (const auto& f : o.fields) {
    if (!fs::exists(f)) missing.push_back(f);
  }
  for (const auto& f : o.sets) {
    if (!fs::exists(f)) missing.push_back(f);
  }
  if (!missing.empty()) {
    std::string msg = "missing inputs:";
    for (const auto& f : missing) msg += "\n  " + f;
    throw InputError(msg);
  }
  if (o.fields.empty() && o.sets.empty()) throw InputError("nothing to plot (use --field or --sets)");
  Manifest m("plot", o.out, o.seed);
  m.config() = {{"fields", o.fields}, {"sets", o.sets}, {"limit", o.limit}};
  m.add_input(o.mesh);
  const TriangularMesh mesh = io::read_mesh(o.mesh);
  Stage stage(m, "plot");
  std::vector<Matrix> fields;
  double limit = o.limit;
  for (const auto& f : o.fields) {
    m.add_input(f);
    fields.push_back(io::read_csv(f));
    if (fields.back().rows() != mesh.n()) throw DimensionError(f + ": rows do not match the mesh vertices");
    if (o.limit <= 0.0) limit = std::max(limit, fields.back().cwiseAbs().maxCoeff());
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string stem = fs::path(o.fields[i]).stem().string();
    for (Index k = 0; k < fields[i].cols(); ++k) {
      const std::string f = stem + "_task" + std::to_string(k) + ".ppm";
      field_heatmap(mesh, fields[i].col(k), limit).write_ppm(m.path(f));
      m.add_output(f);
    }
  }
  if (!o.sets.empty()) {
    if (o.sets.size() > kActivationColors.size()) throw InputError("at most three activation sets");
    std::vector<Matrix> sets;
    for (const auto& f : o.sets) {
      m.add_input(f);
      sets.push_back(io::read_csv(f));
      if (sets.back().rows() != mesh.n() || sets.back().cols() != sets[0].cols()) {
        throw DimensionError(f + ": activation sets must be vertices x tasks with matching shapes");
      }
    }
    for (Index k = 0; k < sets[0].cols(); ++k) {
      std::vector<std::vector<bool>> s;
      for (const auto& a : sets) {
        std::vector<bool> col(static_cast<std::size_t>(mesh.n()));
        for (Index v = 0; v < mesh.n(); ++v) col[static_cast<std::size_t>(v)] = a(v, k) != 0.0;
        s.push_back(std::move(col));
      }
      const std::string f = "activation_task" + std::to_string(k) + ".ppm";
      activation_map(mesh, s, std::vector<Rgb>(kActivationColors.begin(), kActivationColors.begin() +
                                                                            static_cast<long>(sets.size())))
          .write_ppm(m.path(f));
      m.add_output(f);
    }
  }
  m.write();
}

}  // namespace sbglm::cli
