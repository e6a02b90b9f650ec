#include <sbglm_cli/artifacts.hpp>

#include <sbglm/error.hpp>
#include <sbglm/io.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace sbglm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path, Manifest* manifest) {
  if (manifest) manifest->add_input(path);
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_json(Manifest& manifest, const std::string& relative, const json& j) {
  io::write_text(manifest.path(relative), j.dump(2) + "\n");
  manifest.add_output(relative);
}

void write_indices(Manifest& manifest, const std::string& relative, const std::vector<int>& idx) {
  Matrix m(static_cast<Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) m(static_cast<Index>(i), 0) = idx[i];
  io::write_csv(manifest.path(relative), m, {"index"});
  manifest.add_output(relative);
}

std::vector<int> read_indices(const std::string& path, Manifest* manifest) {
  if (manifest) manifest->add_input(path);
  const Matrix m = io::read_csv(path);
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(m(i, 0));
  return out;
}

}  // namespace

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("not a number list: '" + text + "'");
    }
  }
  if (out.empty()) throw InputError("empty number list");
  return out;
}

void write_run(Manifest& manifest, const std::string& relative_dir, const SessionData& data) {
  fs::create_directories(manifest.path(relative_dir));
  const std::string prefix = relative_dir.empty() ? "" : relative_dir + "/";
  const std::string bold = prefix + "bold.csv", design = prefix + "design.csv";
  io::write_csv(manifest.path(bold), data.y);
  manifest.add_output(bold);
  const Index T = data.timepoints(), K = data.tasks(), N = data.locations();
  if (data.x.is_shared()) {
    io::write_csv(manifest.path(design), data.x.at(0));
  } else {
    Matrix all(T, N * K);
    for (Index v = 0; v < N; ++v) all.middleCols(v * K, K) = data.x.at(v);
    io::write_csv(manifest.path(design), all);
  }
  manifest.add_output(design);
  if (data.z.cols() > 0) {
    io::write_csv(manifest.path(prefix + "nuisance.csv"), data.z);
    manifest.add_output(prefix + "nuisance.csv");
  }
  write_json(manifest, prefix + "run.json",
             json{{"tasks", K}, {"timepoints", T}, {"locations", N}, {"tr", data.tr}, {"whitened", data.whitened}});
}

SessionData read_run(const std::string& dir, Manifest* manifest) {
  const json meta = read_json((fs::path(dir) / "run.json").string(), manifest);
  SessionData d;
  const std::string bold = (fs::path(dir) / "bold.csv").string(), design = (fs::path(dir) / "design.csv").string();
  if (manifest) {
    manifest->add_input(bold);
    manifest->add_input(design);
  }
  d.y = io::read_csv(bold);
  d.x = io::read_design(design, meta.at("tasks").get<Index>(), d.y.cols());
  const std::string nuisance = (fs::path(dir) / "nuisance.csv").string();
  if (fs::exists(nuisance)) {
    if (manifest) manifest->add_input(nuisance);
    d.z = io::read_csv(nuisance);
  } else {
    d.z = Matrix(d.y.rows(), 0);
  }
  d.tr = meta.value("tr", 1.0);
  d.whitened = meta.value("whitened", false);
  d.validate();
  return d;
}

Projector load_projector(const TriangularMesh& mesh, const std::string& locations_path, Manifest* manifest) {
  if (locations_path.empty()) return Projector::identity(mesh.n());
  if (manifest) manifest->add_input(locations_path);
  const Matrix loc = io::read_csv(locations_path);
  if (loc.cols() != 3) throw InputError(locations_path + ": expected 3 columns (x, y, z)");
  return build_projector(mesh, Eigen::MatrixX3d(loc));
}

std::vector<Part> make_parts(const TriangularMesh& mesh, const Projector& projector, bool split) {
  int count = 1;
  std::vector<int> label = mesh.component_labels(&count);
  if (!split || count == 1) {
    Part p;
    p.mesh = mesh;
    p.projector = projector;
    for (Index i = 0; i < mesh.n(); ++i) p.vertices.push_back(static_cast<int>(i));
    for (Index v = 0; v < projector.num_locations(); ++v) p.locations.push_back(static_cast<int>(v));
    return {p};
  }
  std::vector<Part> parts(static_cast<std::size_t>(count));
  for (Index i = 0; i < mesh.n(); ++i) parts[static_cast<std::size_t>(label[i])].vertices.push_back(static_cast<int>(i));
  std::vector<int> local(static_cast<std::size_t>(mesh.n()));
  for (auto& p : parts) {
    std::vector<int> map;
    p.mesh = mesh.submesh(p.vertices, &map);
    for (std::size_t j = 0; j < map.size(); ++j) local[static_cast<std::size_t>(map[j])] = static_cast<int>(j);
    p.vertices = map;
  }
  if (projector.is_identity()) {
    for (auto& p : parts) {
      p.locations = p.vertices;
      p.projector = Projector::identity(static_cast<Index>(p.vertices.size()));
    }
    return parts;
  }
  const RowSparseMatrix& psi = projector.matrix();
  std::vector<std::vector<Eigen::Triplet<double>>> trip(parts.size());
  for (Index v = 0; v < psi.rows(); ++v) {
    RowSparseMatrix::InnerIterator it(psi, v);
    if (!it) throw InputError("data location " + std::to_string(v) + " has no projector weights");
    const auto c = static_cast<std::size_t>(label[it.col()]);
    const auto row = static_cast<int>(parts[c].locations.size());
    parts[c].locations.push_back(static_cast<int>(v));
    for (; it; ++it) trip[c].emplace_back(row, local[it.col()], it.value());
  }
  for (std::size_t c = 0; c < parts.size(); ++c) {
    RowSparseMatrix m(static_cast<Index>(parts[c].locations.size()), static_cast<Index>(parts[c].vertices.size()));
    m.setFromTriplets(trip[c].begin(), trip[c].end());
    parts[c].projector = Projector(std::move(m));
  }
  return parts;
}

SessionData restrict_run(const SessionData& data, const std::vector<int>& locations) {
  if (static_cast<Index>(locations.size()) == data.locations()) {
    bool same = true;
    for (std::size_t i = 0; i < locations.size(); ++i) same &= locations[i] == static_cast<int>(i);
    if (same) return data;
  }
  SessionData out;
  out.y.resize(data.timepoints(), static_cast<Index>(locations.size()));
  std::vector<Matrix> xs;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    out.y.col(static_cast<Index>(i)) = data.y.col(locations[i]);
    if (!data.x.is_shared()) xs.push_back(data.x.at(locations[i]));
  }
  out.x = data.x.is_shared() ? data.x : Design(std::move(xs));
  out.z = data.z;
  out.tr = data.tr;
  out.whitened = data.whitened;
  return out;
}

void write_part_fit(Manifest& manifest, int index, const Part& part, const PartFit& fit) {
  const std::string dir = "part" + std::to_string(index);
  fs::create_directories(manifest.path(dir));
  io::write_text(manifest.path(dir + "/theta.json"), io::theta_to_json(fit.theta) + "\n");
  manifest.add_output(dir + "/theta.json");
  io::write_triplets(manifest.path(dir + "/xtx.txt"), fit.stats.xtx);
  manifest.add_output(dir + "/xtx.txt");
  io::write_csv(manifest.path(dir + "/xty.csv"), fit.stats.xty, {"xty"});
  manifest.add_output(dir + "/xty.csv");
  write_indices(manifest, dir + "/vertices.csv", part.vertices);
  write_indices(manifest, dir + "/locations.csv", part.locations);
  write_json(manifest, dir + "/part.json",
             json{{"yty", fit.stats.yty}, {"tn", fit.stats.tn}, {"n", fit.stats.n}, {"tasks", fit.stats.tasks}});
}

FitArtifact read_fit(const std::string& dir, Manifest* manifest) {
  FitArtifact out;
  out.dir = dir;
  const json meta = read_json((fs::path(dir) / "fit.json").string(), manifest);
  const std::string mesh_path = (fs::path(dir) / "mesh.txt").string();
  if (manifest) manifest->add_input(mesh_path);
  out.mesh = io::read_mesh(mesh_path);
  const std::string loc = (fs::path(dir) / "locations.csv").string();
  out.projector = load_projector(out.mesh, fs::exists(loc) ? loc : std::string(), manifest);
  out.tasks = meta.at("tasks").get<Index>();
  const int parts = meta.at("parts").get<int>();
  std::vector<Part> split = make_parts(out.mesh, out.projector, parts > 1);
  if (static_cast<int>(split.size()) != parts) throw InputError(dir + ": part count does not match the mesh");
  for (int c = 0; c < parts; ++c) {
    const fs::path pdir = fs::path(dir) / ("part" + std::to_string(c));
    Part& part = split[static_cast<std::size_t>(c)];
    if (read_indices((pdir / "vertices.csv").string(), manifest) != part.vertices ||
        read_indices((pdir / "locations.csv").string(), manifest) != part.locations) {
      throw InputError(pdir.string() + ": vertex or location lists do not match the mesh");
    }
    PartFit f;
    if (manifest) manifest->add_input((pdir / "theta.json").string());
    f.theta = io::theta_from_json(io::read_text((pdir / "theta.json").string()));
    const json pj = read_json((pdir / "part.json").string(), manifest);
    if (manifest) {
      manifest->add_input((pdir / "xtx.txt").string());
      manifest->add_input((pdir / "xty.csv").string());
    }
    f.stats.xtx = io::read_triplets((pdir / "xtx.txt").string());
    f.stats.xty = io::read_csv((pdir / "xty.csv").string()).col(0);
    f.stats.yty = pj.at("yty").get<double>();
    f.stats.tn = pj.at("tn").get<double>();
    f.stats.n = pj.at("n").get<Index>();
    f.stats.tasks = pj.at("tasks").get<Index>();
    if (f.stats.n != part.mesh.n() || f.stats.xty.size() != f.stats.n * f.stats.tasks ||
        f.stats.xtx.rows() != f.stats.xty.size()) {
      throw InputError(pdir.string() + ": statistics do not match the mesh");
    }
    out.fits.push_back(std::move(f));
  }
  out.parts = std::move(split);
  return out;
}

}  // namespace sbglm::cli
