#include <sbglm_cli/artifacts.hpp>
#include <sbglm_cli/commands.hpp>

#include <sbglm/error.hpp>
#include <sbglm/io.hpp>

#include <functional>
#include <map>

namespace sbglm::cli {

using nlohmann::json;

namespace {

template <class T>
std::function<void(const json&)> set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

}  // namespace

SimConfig sim_config_from_json(const json& j) {
  if (!j.is_object()) throw InputError("simulation config must be a JSON object");
  SimConfig c;
  std::vector<double> ar;
  std::string mesh = "grid";
  const std::map<std::string, std::function<void(const json&)>> fields{
      {"mesh", set(mesh)},
      {"n_vertices", set(c.n_vertices)},
      {"hemispheres", set(c.hemispheres)},
      {"spacing_mm", set(c.spacing_mm)},
      {"tasks", set(c.tasks)},
      {"timepoints", set(c.timepoints)},
      {"tr", set(c.tr)},
      {"amplitude", set(c.amplitude)},
      {"bump_radius_mm", set(c.bump_radius_mm)},
      {"bump_power", set(c.bump_power)},
      {"bumps_per_task", set(c.bumps_per_task)},
      {"error_variance", set(c.error_variance)},
      {"ar_coefficients", set(ar)},
      {"subjects", set(c.subjects)},
      {"sessions", set(c.sessions)},
      {"runs", set(c.runs)},
      {"subject_var", set(c.subject_var)},
      {"session_var", set(c.session_var)},
      {"run_var", set(c.run_var)},
      {"block_length_s", set(c.block_length_s)},
      {"baseline", set(c.baseline)},
      {"seed", set(c.seed)},
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw InputError("simulation config: unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception&) {
      throw InputError("simulation config: bad value for '" + key + "'");
    }
  }
  if (mesh == "grid") c.mesh = MeshKind::Grid;
  else if (mesh == "icosphere") c.mesh = MeshKind::Icosphere;
  else throw InputError("simulation config: mesh must be 'grid' or 'icosphere'");
  c.ar_coefficients = Eigen::Map<const Vector>(ar.data(), static_cast<Index>(ar.size()));
  c.hrf.tr = c.tr;
  c.validate();
  return c;
}

json sim_config_to_json(const SimConfig& c) {
  return json{{"mesh", c.mesh == MeshKind::Grid ? "grid" : "icosphere"},
              {"n_vertices", c.n_vertices},
              {"hemispheres", c.hemispheres},
              {"spacing_mm", c.spacing_mm},
              {"tasks", c.tasks},
              {"timepoints", c.timepoints},
              {"tr", c.tr},
              {"amplitude", c.amplitude},
              {"bump_radius_mm", c.bump_radius_mm},
              {"bump_power", c.bump_power},
              {"bumps_per_task", c.bumps_per_task},
              {"error_variance", c.error_variance},
              {"ar_coefficients", std::vector<double>(c.ar_coefficients.data(),
                                                      c.ar_coefficients.data() + c.ar_coefficients.size())},
              {"subjects", c.subjects},
              {"sessions", c.sessions},
              {"runs", c.runs},
              {"subject_var", c.subject_var},
              {"session_var", c.session_var},
              {"run_var", c.run_var},
              {"block_length_s", c.block_length_s},
              {"baseline", c.baseline},
              {"seed", c.seed}};
}

void run_simulate(const SimulateOptions& o) {
  json cfg = json::object();
  if (!o.config.empty()) {
    try {
      cfg = json::parse(io::read_text(o.config));
    } catch (const json::exception& e) {
      throw InputError(o.config + ": " + e.what());
    }
  }
  SimConfig c = sim_config_from_json(cfg);
  if (o.seed_given) c.seed = o.seed;

  Manifest m("simulate", o.out, c.seed);
  if (!o.config.empty()) m.add_input(o.config);
  m.config() = sim_config_to_json(c);

  Simulation sim;
  {
    Stage s(m, "simulate");
    sim = simulate(c);
  }
  {
    Stage s(m, "write");
    io::write_mesh(m.path("mesh.txt"), sim.mesh);
    m.add_output("mesh.txt");
    std::vector<std::string> task_names;
    for (Index k = 0; k < c.tasks; ++k) task_names.push_back("task" + std::to_string(k));
    io::write_csv(m.path("truth_beta.csv"), sim.truth.beta, task_names);
    m.add_output("truth_beta.csv");
    for (std::size_t sub = 0; sub < sim.truth.subject_beta.size() && c.subjects > 1; ++sub) {
      const std::string f = "truth_subject" + std::to_string(sub) + "_beta.csv";
      io::write_csv(m.path(f), sim.truth.subject_beta[sub], task_names);
      m.add_output(f);
    }
    json runs = json::array();
    for (std::size_t r = 0; r < sim.runs.size(); ++r) {
      const RunIndex& idx = sim.truth.run_index[r];
      const std::string dir = "sub" + std::to_string(idx.subject) + "_ses" + std::to_string(idx.session) + "_run" +
                              std::to_string(idx.run);
      write_run(m, dir, sim.runs[r]);
      io::write_csv(m.path(dir + "/stimulus.csv"), sim.stimulus[r], task_names);
      m.add_output(dir + "/stimulus.csv");
      io::write_csv(m.path(dir + "/truth_beta.csv"), sim.truth.run_beta[r], task_names);
      m.add_output(dir + "/truth_beta.csv");
      runs.push_back({{"dir", dir}, {"subject", idx.subject}, {"session", idx.session}, {"run", idx.run}});
    }
    json centers = json::array();
    for (Index i = 0; i < sim.truth.bump_centers.rows(); ++i) {
      centers.push_back({sim.truth.bump_centers(i, 0), sim.truth.bump_centers(i, 1), sim.truth.bump_centers(i, 2)});
    }
    json active = json::array();
    for (Index k = 0; k < c.tasks; ++k) active.push_back(sim.truth.mask.col(k).count());
    const json truth{{"config", sim_config_to_json(c)},
                     {"vertices", sim.mesh.n()},
                     {"bump_centers", centers},
                     {"active_vertices", active},
                     {"runs", runs}};
    io::write_text(m.path("truth.json"), truth.dump(2) + "\n");
    m.add_output("truth.json");
  }
  m.write();
}

}  // namespace sbglm::cli
