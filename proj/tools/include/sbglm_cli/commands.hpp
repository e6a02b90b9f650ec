#pragma once

#include <sbglm/preprocess.hpp>
#include <sbglm/simulator.hpp>

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace CLI {
class App;
}

namespace sbglm::cli {

class Manifest;

/// Registers every subcommand on `app`.
void register_commands(CLI::App& app);

/// Keys mirror the SimConfig fields; unknown keys are rejected.
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json sim_config_to_json(const SimConfig& c);

struct SimulateOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  bool seed_given = false;
};
void run_simulate(const SimulateOptions& o);

struct PreprocessOptions {
  std::string mesh;
  std::string bold;
  std::string design;    ///< already convolved T x K
  std::string stimulus;  ///< T x K indicators, convolved here
  std::string nuisance;
  std::string out;
  bool raw = false;      ///< scale raw BOLD to percent signal change
  double tr = 1.0;
  HrfParams hrf;
  PrewhitenOptions prewhiten;
  std::uint64_t seed = 1;
};
void run_preprocess(const PreprocessOptions& o);

/// Input runs: run directories, or BOLD/design CSV pairs.
struct RunInputs {
  std::vector<std::string> runs;
  std::vector<std::string> bold;
  std::vector<std::string> design;
  Index tasks = 0;
  bool prewhitened = false;
};
std::vector<SessionData> load_runs(const RunInputs& inputs, Manifest& manifest);

struct ClassicalOptions {
  RunInputs inputs;
  std::string out;
  std::vector<double> gammas;
  double alpha = 0.05;
  bool bonferroni = false;
  std::uint64_t seed = 1;
};
void run_fit_classical(const ClassicalOptions& o);

struct FitEmOptions {
  std::string mesh;
  std::string locations;
  RunInputs inputs;
  std::string out;
  double tolerance = 1e-3;
  int max_iterations = 100;
  bool relative_metric = false;
  bool no_accelerate = false;
  bool tasks_parallel = false;
  bool joint_components = false;
  int hutchinson_probes = 0;
  std::uint64_t seed = 1;
};
void run_fit_em(const FitEmOptions& o);

struct ExcursionsOptions {
  std::string fit;
  std::string out;
  std::vector<double> gammas{0.0, 0.5, 1.0};
  double alpha = 0.01;
  Index samples = 10000;
  std::uint64_t seed = 1;
};
void run_excursions(const ExcursionsOptions& o);

struct GroupCommandOptions {
  std::string subjects;
  std::string out;
  Index draws = 200;
  std::vector<double> gammas{0.0, 0.5, 1.0};
  double alpha = 0.01;
  std::vector<double> weights;
  std::uint64_t seed = 1;
};
void run_group(const GroupCommandOptions& o);

struct BenchmarkOptions {
  std::string out;
  std::vector<std::string> conditions{"2000x2"};
  int replicates = 2;
  std::vector<double> sweep;  ///< EM tolerances for the tolerance study; empty skips it
  std::string sweep_condition = "5000x4";
  int sweep_replicates = 9;
  double tolerance = 1e-3;
  Index timepoints = 300;
  std::uint64_t seed = 1;
};
void run_benchmark(const BenchmarkOptions& o);

struct PlotOptions {
  std::string mesh;
  std::vector<std::string> fields;
  std::vector<std::string> sets;
  double limit = 0.0;
  std::string out;
  std::uint64_t seed = 1;
};
void run_plot(const PlotOptions& o);

}  // namespace sbglm::cli
