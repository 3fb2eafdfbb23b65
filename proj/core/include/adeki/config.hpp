#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adeki/ad_engine.hpp"
#include "adeki/forward_model.hpp"

namespace adeki {

struct GridConfig {
  int n = 101;
  double lo = -2.0;
  double hi = 3.0;
};

struct SolverConfig {
  double cfl = 0.4;
  double dt = 0.0;
  double blowup = 1e6;
  int source_quad = 5;
};

struct TruthConfig {
  SourceFamily family = SourceFamily::gaussian;
  double x = 0.45;
  double y = 0.25;
  double h = 0.05;
  double s = 2.0;
};

struct ModelConfig {
  SourceFamily family = SourceFamily::gaussian;
  double h = 0.05;
  double s = 3.0;
  ErrorModel error = ErrorModel::strength;
  double input_scale = 1.0;
  double init_sd = 0.3;
};

struct PriorConfig {
  std::string type = "uniform";  // uniform | gaussian
  double mean_x = 0.5;
  double mean_y = 0.5;
  double sd = 0.1;
  double flatten_power = 1.0;
};

struct PhysicalConfig {
  int lattice_n = 51;
  double step_box = 0.2;
  int candidates = 9;
  int eig_samples = 30;
  int cache_stride = 1;
  bool recondition_history = false;  // rebuild the posterior from all physical records after training
  PriorConfig prior;
};

struct NetworkOptimizerConfig {
  double step = 0.02;
  int max_iters = 70;
  int max_halvings = 6;
  double tol = 0.0;
};

struct TrainConfig {
  int max_epochs = 200;
  double plateau = 1e-8;
  double step = 1e-2;
  double growth = 1.0;
  bool include_physical = false;  // also fit the physical-design measurements
};

enum class NetworkUpdate { train, eki_mean };

struct NetworkConfig {
  int ensemble_size = 30;
  int iterations = 3;
  int eig_samples = 4;
  double prior_var = 1.0;
  DataSource data_source = DataSource::predicted;
  ForwardStrategy strategy = ForwardStrategy::scaled;
  bool truncate_theta_chain = false;
  double kl_tol = 0.0;
  CheckpointMode checkpoint = CheckpointMode::checkpoint;
  NetworkUpdate nn_update = NetworkUpdate::train;
  NetworkOptimizerConfig optimizer;
  TrainConfig train;
};

struct GradcheckConfig {
  int grid_n = 21;
  int ensemble_size = 20;
  int iterations = 3;
  int designs = 25;
  double fd_step = 1e-4;
  double tol = 1e-3;
  double lo = 0.05;
  double hi = 0.95;
  double stage_time = 0.04;
  double theta_x = 0.45;
  double theta_y = 0.25;
};

struct BenchConfig {
  int grid_n = 41;
  std::vector<int> ensemble_sizes{10, 20, 40, 80};
  std::vector<int> iterations{2, 4, 8, 16};
  int fixed_ensemble = 20;
  int fixed_iterations = 4;
  int repetitions = 3;
  double stage_time = 0.04;
  double design_x = 0.47;
  double design_y = 0.27;
};

struct ExperimentConfig {
  std::string name = "parametric";
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int n_stages = 6;
  GridConfig grid;
  SolverConfig solver;
  double velocity_c = 20.0;
  TruthConfig truth;
  ModelConfig model;
  std::vector<double> stage_times{0.030, 0.035, 0.040, 0.045, 0.050, 0.055};
  double noise_std = 0.05;
  double initial_x = 0.5;
  double initial_y = 0.5;
  bool baseline = true;
  PhysicalConfig physical;
  NetworkConfig network;
  GradcheckConfig gradcheck;
  BenchConfig bench;

  ModelSpec model_spec() const;
  Grid2D grid2d() const { return Grid2D::square(grid.lo, grid.hi, grid.n); }
  SolverOptions solver_options() const { return {solver.cfl, solver.dt, solver.blowup}; }
  /// Throws ErrorKind::config naming the offending key.
  void validate() const;
};

/// Parses a JSON document. Unknown keys and wrong types raise
/// ErrorKind::config with the dotted key path in the message.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg, int indent = 2);

/// parametric, structural, their *_coarse variants, parametric_biased and
/// gradcheck.
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

std::string to_string(SourceFamily f);
std::string to_string(ErrorModel e);
std::string to_string(ForwardStrategy s);
std::string to_string(DataSource s);
std::string to_string(CheckpointMode m);
std::string to_string(NetworkUpdate u);

}  // namespace adeki
