#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "adeki/eki.hpp"

namespace adeki {

/// checkpoint keeps only the per-iteration ensembles and predictions and
/// re-evaluates member Jacobians in the reverse pass; store_all keeps every
/// member evaluation, including solver state, from the forward pass.
enum class CheckpointMode { checkpoint, store_all };

struct AdOptions {
  EkiOptions eki;
  CheckpointMode mode = CheckpointMode::checkpoint;
  bool truncate_theta_chain = false;
};

struct DesignGradient {
  double value = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
  std::vector<double> kl_trace;
};

/// KL between the initial and final EKI ensembles and its derivative with
/// respect to (d.x, d.y), holding the sample's random draws fixed.
DesignGradient grad_kl_wrt_design(const Design& d, const KlSample& sample, const ObservationFn& observe,
                                  const BoundMap& map, const MatrixXd& gamma, const AdOptions& options);
DesignGradient grad_kl_wrt_design(const Design& d, const KlSample& sample, const ObservationFn& observe,
                                  const DesignModel& model, const MatrixXd& gamma, const AdOptions& options);

/// Sample average of grad_kl_wrt_design over a frozen EIG sample set.
DesignGradient grad_eig_wrt_design(const Design& d, const EigSampleSet& samples, const DesignModel& model,
                                   const MatrixXd& gamma, const AdOptions& options);

struct OptimizerOptions {
  double step = 0.02;
  int max_iters = 70;
  int max_halvings = 6;
  double tol = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  double step_box = std::numeric_limits<double>::infinity();
  const Grid2D* grid = nullptr;  // nudges iterates off grid lines when set
};

struct OptimizerTrace {
  std::vector<Design> designs;
  std::vector<double> values;
  std::vector<Eigen::Vector2d> grads;
  std::string stop_reason;
  int evaluations = 0;
};

using DesignObjective = std::function<DesignGradient(const Design&)>;

/// Projected ascent along the normalized gradient; a step is accepted only
/// if it increases the objective, otherwise it is halved.
OptimizerTrace optimize_design(const Design& d0, const DesignObjective& objective, const OptimizerOptions& options);

}  // namespace adeki
