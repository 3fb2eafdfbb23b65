#pragma once

#include <Eigen/Dense>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "adeki/discrepancy_net.hpp"
#include "adeki/eki.hpp"
#include "adeki/field_solver.hpp"

namespace adeki {

enum class SourceFamily { gaussian, cauchy };

/// strength: the error parameter is the scalar theta_s.
/// network: theta_s is fixed and the 37 network weights are the parameters.
enum class ErrorModel { strength, network };

enum class ForwardStrategy { direct, green, scaled };

struct ModelSpec {
  SourceFamily family = SourceFamily::gaussian;
  double theta_h = 0.05;
  double theta_s = 2.0;
  ErrorModel error = ErrorModel::strength;
  double input_scale = 1.0;
  int quad = 5;

  Eigen::Index param_dim() const noexcept { return error == ErrorModel::strength ? 1 : net::kParams; }
};

/// Discretized source of a single family member (no correction).
void family_source(const Grid2D& grid, SourceFamily family, const SourceParams& p, int quad, Field& out);

/// Source term of the modelled system at physical parameters (tx, ty) as a
/// function of the error parameters psi.
class SourceEvaluator {
 public:
  SourceEvaluator(const Grid2D& grid, const ModelSpec& spec, double theta_x, double theta_y);

  const ModelSpec& spec() const noexcept { return spec_; }
  Eigen::Index param_dim() const noexcept { return spec_.param_dim(); }

  /// Unit-strength family source (strength mode) or the fixed family source.
  const Field& base() const noexcept { return base_; }

  void field(const VectorXd& psi, Field& out) const;
  /// Network correction at the nodes; zero-sized in strength mode.
  void correction(const VectorXd& psi, Field& out) const;
  /// grad += scale * d dot(kernel, field(psi)) / d psi.
  void accumulate_grad(const Field& kernel, const VectorXd& psi, double scale, double* grad) const;

 private:
  Grid2D grid_;
  ModelSpec spec_;
  Field base_;
  std::vector<double> in_x_, in_y_;
};

/// Solver, full stage schedule and the snapshot that a model observes.
struct StageSetup {
  std::shared_ptr<const FieldSolver> solver;
  std::shared_ptr<const TimeSchedule> schedule;
  std::size_t snapshot = 0;

  double time() const { return schedule->snapshot_times.at(snapshot); }
};

StageSetup make_stage(std::shared_ptr<const FieldSolver> solver, std::shared_ptr<const TimeSchedule> schedule,
                      double t);

/// Truth field over the whole schedule.
ScalarFieldSeries truth_series(const FieldSolver& solver, const TimeSchedule& schedule, SourceFamily family,
                               const SourceParams& p, int quad);

/// G(psi, d) at fixed physical parameters. direct runs one PDE solve per
/// evaluation; green contracts per-node adjoint kernels with the source;
/// scaled (strength mode only) rescales a single unit-strength solution.
class SourceDesignModel final : public DesignModel {
 public:
  SourceDesignModel(StageSetup stage, ModelSpec spec, double theta_x, double theta_y, ForwardStrategy strategy);

  Eigen::Index param_dim() const override { return spec_.param_dim(); }
  Eigen::Index data_dim() const override { return 1; }
  std::shared_ptr<const BoundMap> bind(const Design& d) const override;

  const StageSetup& stage() const noexcept { return stage_; }
  const SourceEvaluator& evaluator() const noexcept { return evaluator_; }
  ForwardStrategy strategy() const noexcept { return strategy_; }

  /// Adjoint kernel of the snapshot value at one node (memoized).
  std::shared_ptr<const Field> node_kernel(std::size_t node) const;

 private:
  StageSetup stage_;
  ModelSpec spec_;
  ForwardStrategy strategy_;
  SourceEvaluator evaluator_;
  std::shared_ptr<const Field> unit_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::size_t, std::shared_ptr<const Field>> kernels_;
};

/// Mean squared misfit between records and model predictions at fixed
/// physical parameters, with its gradient in psi. Predictions are adjoint
/// kernels contracted with the source, so no PDE solve is needed per call.
class RecordLoss {
 public:
  RecordLoss(std::shared_ptr<const FieldSolver> solver, std::shared_ptr<const TimeSchedule> schedule,
             const ModelSpec& spec, double theta_x, double theta_y, std::vector<TrainingRecord> records);

  double operator()(const VectorXd& psi, VectorXd* grad) const;
  std::vector<double> predictions(const VectorXd& psi) const;
  LossFn as_loss() const {
    return [this](const VectorXd& p, VectorXd* g) { return (*this)(p, g); };
  }

 private:
  SourceEvaluator evaluator_;
  std::vector<TrainingRecord> records_;
  std::vector<Field> kernels_;
};

}  // namespace adeki
