#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace sbglm::cli {

std::string sha256_hex(const std::string& bytes);
/// Throws `InputError` when the file cannot be read.
std::string sha256_file(const std::string& path);

/// Provenance record for one output directory: command, configuration,
/// seed, input and output hashes, and wall time per stage. Written as
/// manifest.json; numerical outputs depend only on the recorded inputs,
/// configuration and seed.
class Manifest {
 public:
  Manifest(std::string command, std::string out_dir, std::uint64_t seed);

  const std::string& out_dir() const { return out_dir_; }
  std::string path(const std::string& relative) const;

  nlohmann::json& config() { return config_; }
  void add_input(const std::string& path);
  /// Registers a file written below the output directory.
  void add_output(const std::string& relative);
  void warn(const std::string& message);
  void record_stage(const std::string& name, double seconds);

  nlohmann::json to_json() const;
  /// Hashes the registered outputs and writes manifest.json.
  void write() const;

 private:
  std::string command_;
  std::string out_dir_;
  std::uint64_t seed_;
  nlohmann::json config_ = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
  std::vector<std::pair<std::string, double>> stages_;
};

/// Adds the elapsed wall time to the manifest when it goes out of scope.
class Stage {
 public:
  Stage(Manifest& manifest, std::string name);
  ~Stage();
  Stage(const Stage&) = delete;
  Stage& operator=(const Stage&) = delete;

 private:
  Manifest& manifest_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace sbglm::cli
