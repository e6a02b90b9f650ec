#include <sbglm_cli/artifacts.hpp>
#include <sbglm_cli/commands.hpp>

#include <sbglm/error.hpp>
#include <sbglm/excursions.hpp>
#include <sbglm/figures.hpp>
#include <sbglm/group_level.hpp>
#include <sbglm/io.hpp>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace sbglm::cli {

namespace fs = std::filesystem;
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

// Activation CSVs for every threshold and one map per task when the data
// locations are the mesh vertices.
void write_activation(Manifest& m, const TriangularMesh& mesh, bool on_vertices, const std::vector<double>& gammas,
                      const std::vector<Matrix>& active, const std::vector<Matrix>* marginal) {
  const Index K = active.at(0).cols();
  const auto header = task_header(K);
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    const std::string f = "active_gamma_" + gamma_tag(gammas[g]) + ".csv";
    io::write_csv(m.path(f), active[g], header);
    m.add_output(f);
    if (marginal) {
      const std::string p = "marginal_gamma_" + gamma_tag(gammas[g]) + ".csv";
      io::write_csv(m.path(p), (*marginal)[g], header);
      m.add_output(p);
    }
  }
  if (!on_vertices) {
    m.warn("data locations differ from mesh vertices; activation maps not drawn");
    return;
  }
  std::vector<std::size_t> order(gammas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gammas[a] < gammas[b]; });
  const std::vector<Rgb> palette{kActivationColors[0], kActivationColors[1], kActivationColors[2],
                                 Rgb{0x00, 0x80, 0x00}, Rgb{0x00, 0x00, 0xC0}};
  if (gammas.size() > palette.size()) {
    m.warn("more thresholds than map colours; activation maps not drawn");
    return;
  }
  std::vector<Rgb> colors(palette.begin(), palette.begin() + static_cast<long>(gammas.size()));
  for (Index k = 0; k < K; ++k) {
    std::vector<std::vector<bool>> sets;
    for (std::size_t g : order) {
      std::vector<bool> s(static_cast<std::size_t>(mesh.n()));
      for (Index v = 0; v < mesh.n(); ++v) s[static_cast<std::size_t>(v)] = active[g](v, k) != 0.0;
      sets.push_back(std::move(s));
    }
    const std::string f = "activation_task" + std::to_string(k) + ".ppm";
    activation_map(mesh, sets, colors).write_ppm(m.path(f));
    m.add_output(f);
  }
}

}  // namespace

void run_excursions(const ExcursionsOptions& o) {
  Manifest m("excursions", o.out, o.seed);
  m.config() = {{"fit", o.fit}, {"gammas", o.gammas}, {"alpha", o.alpha}, {"samples", o.samples}};
  FitArtifact fit;
  {
    Stage s(m, "read");
    fit = read_fit(o.fit, &m);
  }
  const Index N = fit.projector.num_locations(), K = fit.tasks;
  std::vector<Matrix> active(o.gammas.size(), Matrix::Zero(N, K)), marginal = active;
  json joint = json::array();
  {
    Stage s(m, "excursions");
    for (std::size_t c = 0; c < fit.parts.size(); ++c) {
      const Part& p = fit.parts[c];
      const SpdeStructure spde(assemble_fem(p.mesh));
      const PosteriorField post = e_step(fit.fits[c].stats, fit.fits[c].theta, spde);
      ExcursionOptions xo;
      xo.alpha = o.alpha;
      xo.samples = o.samples;
      xo.seed = o.seed + c;
      const auto sets = excursion_sets(post, p.projector, o.gammas, xo);
      json part = json::array();
      for (std::size_t g = 0; g < sets.size(); ++g) {
        for (std::size_t v = 0; v < p.locations.size(); ++v) {
          active[g].row(p.locations[v]) = sets[g].active.row(static_cast<Index>(v)).cast<double>().matrix();
          marginal[g].row(p.locations[v]) = sets[g].marginal_prob.row(static_cast<Index>(v));
        }
        part.push_back({{"gamma", o.gammas[g]}, {"joint_prob", sets[g].joint_prob}});
      }
      joint.push_back(part);
    }
  }
  {
    Stage s(m, "write");
    write_activation(m, fit.mesh, fit.projector.is_identity(), o.gammas, active, &marginal);
    io::write_text(m.path("excursions.json"), json{{"alpha", o.alpha}, {"samples", o.samples}, {"parts", joint}}.dump(2) + "\n");
    m.add_output("excursions.json");
  }
  m.write();
}

void run_group(const GroupCommandOptions& o) {
  Manifest m("group", o.out, o.seed);
  m.config() = {{"subjects", o.subjects}, {"draws", o.draws}, {"gammas", o.gammas}, {"alpha", o.alpha},
                {"weights", o.weights}};
  std::vector<std::string> dirs;
  if (!fs::is_directory(o.subjects)) throw InputError("not a directory: " + o.subjects);
  for (const auto& e : fs::directory_iterator(o.subjects)) {
    if (e.is_directory() && fs::exists(e.path() / "fit.json")) dirs.push_back(e.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.size() < 2) throw InputError(o.subjects + ": need at least two fit-em directories");
  if (!o.weights.empty() && o.weights.size() != dirs.size()) {
    throw InputError("--weights has " + std::to_string(o.weights.size()) + " entries for " +
                     std::to_string(dirs.size()) + " subjects");
  }
  std::vector<FitArtifact> fits;
  {
    Stage s(m, "read");
    for (const auto& d : dirs) fits.push_back(read_fit(d, &m));
  }
  const FitArtifact& ref = fits[0];
  const std::string mesh_hash = sha256_file((fs::path(ref.dir) / "mesh.txt").string());
  for (const auto& f : fits) {
    if (sha256_file((fs::path(f.dir) / "mesh.txt").string()) != mesh_hash || f.parts.size() != ref.parts.size() ||
        f.tasks != ref.tasks || f.projector.num_locations() != ref.projector.num_locations()) {
      throw InputError(f.dir + ": mesh, locations or tasks differ from " + ref.dir);
    }
  }

  const Index N = ref.projector.num_locations(), K = ref.tasks;
  std::vector<Matrix> active(o.gammas.size(), Matrix::Zero(N, K));
  Matrix mean(ref.mesh.n(), K), beta(N, K);
  json summary = json::array();
  {
    Stage s(m, "combine");
    for (std::size_t c = 0; c < ref.parts.size(); ++c) {
      const Part& p = ref.parts[c];
      std::vector<SubjectSummary> subjects;
      for (std::size_t i = 0; i < fits.size(); ++i) {
        subjects.push_back(SubjectSummary{fs::path(dirs[i]).filename().string(), fits[i].fits[c].stats,
                                          fits[i].fits[c].theta, o.weights.empty() ? 0.0 : o.weights[i]});
      }
      const SpdeStructure spde(assemble_fem(p.mesh));
      GroupOptions go;
      go.draws = o.draws;
      go.seed = o.seed + c;
      go.gammas = o.gammas;
      go.alpha = o.alpha;
      const GroupResult g = combine_subjects(subjects, spde, p.projector, go);
      const Index n = p.mesh.n(), Np = static_cast<Index>(p.locations.size());
      const Vector draw_mean = g.beta_draws.rowwise().mean();
      for (Index k = 0; k < K; ++k) {
        for (Index i = 0; i < n; ++i) mean(p.vertices[static_cast<std::size_t>(i)], k) = g.posterior_mean[k * n + i];
        for (Index v = 0; v < Np; ++v) {
          beta(p.locations[static_cast<std::size_t>(v)], k) = draw_mean[k * Np + v];
          for (std::size_t t = 0; t < o.gammas.size(); ++t) {
            active[t](p.locations[static_cast<std::size_t>(v)], k) = g.excursions[t].active(v, k) ? 1.0 : 0.0;
          }
        }
      }
      auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
      json joint = json::array();
      for (const auto& e : g.excursions) joint.push_back({{"gamma", e.gamma}, {"joint_prob", e.joint_prob}});
      summary.push_back({{"theta", json::parse(io::theta_to_json(g.theta_mean))},
                         {"log_theta_mean", vec(g.log_theta_mean)},
                         {"log_theta_variance", vec(g.log_theta_variance)},
                         {"log_theta_draw_sd", vec(g.log_theta_draw_sd)},
                         {"weights", g.weights},
                         {"excursions", joint}});
    }
  }
  {
    Stage s(m, "write");
    const auto header = task_header(K);
    io::write_csv(m.path("posterior_mean.csv"), mean, header);
    io::write_csv(m.path("beta.csv"), beta, header);
    m.add_output("posterior_mean.csv");
    m.add_output("beta.csv");
    write_activation(m, ref.mesh, ref.projector.is_identity(), o.gammas, active, nullptr);
    json subjects = json::array();
    for (const auto& d : dirs) subjects.push_back(fs::path(d).filename().string());
    io::write_text(m.path("group.json"), json{{"subjects", subjects}, {"parts", summary}}.dump(2) + "\n");
    m.add_output("group.json");
  }
  m.write();
}

}  // namespace sbglm::cli
