#pragma once

#include <sbglm/preprocess.hpp>
#include <sbglm/spde_prior.hpp>
#include <sbglm/types.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace sbglm::io {

/// Numeric CSV with one header row. Throws `InputError` with the line number
/// on malformed or ragged rows.
Matrix read_csv(std::istream& in, std::vector<std::string>* header = nullptr);
Matrix read_csv(const std::string& path, std::vector<std::string>* header = nullptr);

/// Writes values with round-trip precision. An empty header becomes c0, c1, ...
void write_csv(std::ostream& out, const Eigen::Ref<const Matrix>& m, const std::vector<std::string>& header = {});
void write_csv(const std::string& path, const Eigen::Ref<const Matrix>& m, const std::vector<std::string>& header = {});

/// Task design from a CSV: K columns are shared by all locations, N K columns
/// are per location (location-major: columns v K .. v K + K - 1).
Design read_design(const std::string& path, Index tasks, Index locations);

/// Theta as JSON: {"kappa2": [...], "phi": [...], "sigma2": s, "tau": [...]}.
std::string theta_to_json(const Hyperparameters& theta);
Hyperparameters theta_from_json(const std::string& text);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace sbglm::io
