#pragma once

#include <sbglm/mesh.hpp>
#include <sbglm/preprocess.hpp>
#include <sbglm/types.hpp>

#include <vector>

namespace sbglm {

/// Data summaries the EM estimator needs: X'X and X'y mapped to the mesh,
/// y'y and the observation count. Indices are task-major (k * n + i).
struct SufficientStats {
  SparseMatrix xtx;  ///< nK x nK, full symmetric storage
  Vector xty;        ///< nK
  double yty = 0.0;
  double tn = 0.0;   ///< total observations T * N (summed over runs)
  Index n = 0;
  Index tasks = 0;

  Index size() const { return n * tasks; }
};

/// Stats for one run. `projector` maps mesh vertices to the data locations.
SufficientStats compute_sufficient_stats(const SessionData& data, const Projector& projector);

/// Sum of stats from runs sharing one mesh and task set.
SufficientStats pool(const std::vector<SufficientStats>& parts);

}  // namespace sbglm
