#pragma once

#include <sbglm_cli/manifest.hpp>

#include <sbglm/em_engine.hpp>
#include <sbglm/mesh.hpp>
#include <sbglm/preprocess.hpp>
#include <sbglm/spde_prior.hpp>
#include <sbglm/sufficient_stats.hpp>

#include <string>
#include <vector>

namespace sbglm::cli {

/// Comma-separated numbers, e.g. "0,0.5,1".
std::vector<double> parse_list(const std::string& text);

/// A run directory holds bold.csv (T x N), design.csv (T x K shared, or
/// T x N K per location) and run.json with the task count, TR and whether
/// the data are prewhitened.
void write_run(Manifest& manifest, const std::string& relative_dir, const SessionData& data);
SessionData read_run(const std::string& dir, Manifest* manifest);

/// Data locations N x 3 (x, y, z) or, when empty, the mesh vertices.
Projector load_projector(const TriangularMesh& mesh, const std::string& locations_path, Manifest* manifest);

/// One connected piece of the mesh together with the data locations that
/// project onto it. Pieces are fitted independently.
struct Part {
  std::vector<int> vertices;   ///< original vertex indices
  std::vector<int> locations;  ///< original data location indices
  TriangularMesh mesh;
  Projector projector;
};

/// Splits by connected component when `split` is set; otherwise one part.
std::vector<Part> make_parts(const TriangularMesh& mesh, const Projector& projector, bool split);

/// Restricts a run to the locations of a part.
SessionData restrict_run(const SessionData& data, const std::vector<int>& locations);

/// Per-part fit artifacts in `<fit>/part<c>/`: theta.json, xtx.txt, xty.csv,
/// part.json (y'y, TN, sizes) and the vertex and location index lists.
struct PartFit {
  Hyperparameters theta;
  SufficientStats stats;
};

void write_part_fit(Manifest& manifest, int index, const Part& part, const PartFit& fit);

/// A fit directory as written by fit-em.
struct FitArtifact {
  std::string dir;
  TriangularMesh mesh;
  Projector projector;
  std::vector<Part> parts;
  std::vector<PartFit> fits;
  Index tasks = 0;
};

FitArtifact read_fit(const std::string& dir, Manifest* manifest);

}  // namespace sbglm::cli
