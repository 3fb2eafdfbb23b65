#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adeki/ad_engine.hpp"
#include "adeki/bayes_grid.hpp"
#include "adeki/config.hpp"
#include "adeki/metrics.hpp"

namespace adeki {

/// Objects shared by every run of one configuration: solver, schedule,
/// truth field and (for models linear in theta_s) the unit-field bank.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const std::shared_ptr<const FieldSolver>& solver() const noexcept { return solver_; }
  const std::shared_ptr<const TimeSchedule>& schedule() const noexcept { return schedule_; }
  const std::shared_ptr<const ScalarFieldSeries>& truth() const noexcept { return truth_; }
  StageSetup stage(int index) const { return {solver_, schedule_, static_cast<std::size_t>(index)}; }
  double noise_var() const noexcept { return cfg_.noise_std * cfg_.noise_std; }
  MatrixXd gamma() const { return MatrixXd::Constant(1, 1, noise_var()); }

  GridPosterior initial_prior() const;
  VectorXd initial_psi(std::uint64_t seed) const;
  PredictionCache cache(int stage, const VectorXd& psi) const;

 private:
  ExperimentConfig cfg_;
  std::shared_ptr<const FieldSolver> solver_;
  std::shared_ptr<const TimeSchedule> schedule_;
  std::shared_ptr<const ScalarFieldSeries> truth_;
  std::shared_ptr<const UnitFieldBank> bank_;
};

struct StageRecord {
  int stage = 0;  // 1-based
  double time = 0.0;
  std::uint64_t seed = 0;
  bool corrected = true;
  Design d_g;
  double y_g = 0.0;
  double eig_g = 0.0;
  PosteriorMetrics before;  // after the physical update, before reconditioning
  PosteriorMetrics after;
  double posterior_kl = 0.0;  // KL(posterior after y_G || stage prior)
  bool network_step = false;
  bool network_failed = false;
  std::string failure;
  Design d_nn_start;
  Design d_nn;
  double y_nn = 0.0;
  VectorXd psi_before;
  VectorXd psi_after;
  std::vector<Design> nn_trajectory;
  std::vector<double> nn_objective;
  std::string nn_stop_reason;
  std::vector<double> kl_trace_start;  // sample-averaged KL per EKI iteration
  std::vector<double> kl_trace_final;
  double train_loss_before = 0.0;
  double train_loss_after = 0.0;
  int train_epochs = 0;
  double wall_seconds = 0.0;
  std::size_t peak_bytes = 0;
};

struct RunState {
  GridPosterior posterior;
  VectorXd psi;
  Design d_prev;
  std::vector<TrainingRecord> data;
  std::vector<TrainingRecord> physical;
};

struct RunResult {
  bool corrected = true;
  std::vector<StageRecord> records;
  std::vector<GridPosterior> posteriors;  // final posterior per stage
  RunState state;
};

RunState initial_state(const Experiment& ex, std::uint64_t seed);

/// One iteration of the hybrid loop. With corrected = false the error
/// parameters stay fixed and only the physical steps run.
StageRecord run_stage(const Experiment& ex, RunState& state, int stage_index, std::uint64_t seed, bool corrected);

RunResult run_sequential(const Experiment& ex, int n_stages, std::uint64_t seed, bool corrected);

/// Total error on a 51 x 51 lattice over [0,1]^2, local error on a 9 x 9
/// lattice within +-0.04 of the stage design, and the same local error at
/// the next stage time around the next stage design.
struct FieldErrorRow {
  int stage = 0;
  FieldError total;
  FieldError local;
  std::optional<FieldError> next_local;
};

struct FieldErrorReport {
  std::vector<FieldErrorRow> corrected;
  std::vector<FieldErrorRow> baseline;
};

FieldErrorReport field_error_report(const Experiment& ex, const RunResult& corrected, const RunResult& baseline);

/// Seed-averaged KL trace at the start and end design of a stage's network
/// search, using fresh ensembles from `seeds` substreams.
struct TraceComparison {
  std::vector<double> start;
  std::vector<double> final;
};

TraceComparison compare_design_traces(const Experiment& ex, const StageRecord& record, int seeds,
                                      std::uint64_t base_seed);

/// RNG substream purposes within a stage.
enum class Purpose : std::uint64_t { physical_eig = 1, truth_g = 2, network_eig = 3, truth_nn = 4, init = 5, eki_mean = 6 };

Rng stage_rng(std::uint64_t seed, int stage, Purpose purpose);

}  // namespace adeki
