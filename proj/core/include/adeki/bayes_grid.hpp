#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <vector>

#include "adeki/forward_model.hpp"
#include "adeki/observe.hpp"
#include "adeki/random.hpp"

namespace adeki {

/// Discrete belief over (theta_x, theta_y) on an n x n lattice spanning
/// [0,1]^2. Node k sits at (node(k % n), node(k / n)).
class GridPosterior {
 public:
  explicit GridPosterior(int n = 51);
  GridPosterior(int n, std::vector<double> probs);

  /// Normalizes exp(logw); -inf entries get zero mass.
  static GridPosterior from_log_weights(int n, std::span<const double> logw);
  static GridPosterior gaussian(int n, double mean_x, double mean_y, double sd);

  int n() const noexcept { return n_; }
  std::size_t size() const noexcept { return probs_.size(); }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double operator[](std::size_t k) const { return probs_[k]; }
  double node(int i) const noexcept { return static_cast<double>(i) / (n_ - 1); }
  double x(std::size_t k) const noexcept { return node(static_cast<int>(k % n_)); }
  double y(std::size_t k) const noexcept { return node(static_cast<int>(k / n_)); }

 private:
  int n_;
  std::vector<double> probs_;
};

std::vector<double> log_likelihood_grid(double y, std::span<const double> predictions, double noise_var);
std::vector<double> likelihood_grid(double y, std::span<const double> predictions, double noise_var);

GridPosterior posterior_update(const GridPosterior& prior, std::span<const double> likelihood);
GridPosterior posterior_update_log(const GridPosterior& prior, std::span<const double> log_likelihood);

/// sum p ln(p / q) with 0 ln 0 = 0.
double kl_utility(const GridPosterior& posterior, const GridPosterior& prior);

struct PhysMap {
  double x = 0.0;
  double y = 0.0;
  std::size_t index = 0;
};

/// Argmax node; ties go to the lowest linear index.
PhysMap map_estimate(const GridPosterior& p);

GridPosterior flatten_prior(const GridPosterior& p, double power);

struct PosteriorMetrics {
  PhysMap map;
  double distance = 0.0;
  double sigma_eq = 0.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
};

PosteriorMetrics posterior_metrics(const GridPosterior& p, double truth_x, double truth_y);

/// Grid nodes covering the design region, used to store field windows.
struct FieldWindow {
  int i0 = 0, i1 = 0, j0 = 0, j1 = 0;

  static FieldWindow covering(const Grid2D& grid, double lo, double hi);
  int width() const noexcept { return i1 - i0 + 1; }
  int height() const noexcept { return j1 - j0 + 1; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(width()) * height(); }
  void extract(const Grid2D& grid, const Field& u, double* out) const;
};

/// Solutions at a stage time for every physical-parameter node, restricted
/// to a window. With stride s > 1 only every s-th lattice node is solved and
/// the others are interpolated bilinearly in theta.
class PredictionCache {
 public:
  PredictionCache(Grid2D grid, FieldWindow window, int lattice_n, int stride,
                  std::shared_ptr<const std::vector<double>> data, std::size_t offset, std::size_t pitch,
                  double scale);

  int lattice_n() const noexcept { return lattice_n_; }
  int stride() const noexcept { return stride_; }

  /// G(theta_k, d) for every lattice node k.
  void predict_all(const Design& d, std::vector<double>& out) const;
  double predict(std::size_t theta_index, const Design& d) const;

 private:
  Grid2D grid_;
  FieldWindow window_;
  int lattice_n_;
  int stride_;
  std::shared_ptr<const std::vector<double>> data_;
  std::size_t offset_, pitch_;
  double scale_;

  int stored_n() const noexcept { return (lattice_n_ - 1) / stride_ + 1; }
  void stored_values(const Design& d, std::vector<double>& out) const;
};

/// Runs one solve per stored node with the model source at psi.
PredictionCache build_prediction_cache(const StageSetup& stage, const ModelSpec& spec, const VectorXd& psi,
                                       int lattice_n, int stride);

/// Unit-strength solutions at every schedule snapshot for every stored node;
/// a model that is linear in theta_s is then served by rescaling.
class UnitFieldBank {
 public:
  UnitFieldBank(const FieldSolver& solver, const TimeSchedule& schedule, SourceFamily family, double theta_h,
                int quad, int lattice_n, int stride);

  PredictionCache cache(std::size_t snapshot, double theta_s) const;

 private:
  Grid2D grid_;
  FieldWindow window_;
  int lattice_n_, stride_;
  std::size_t snapshots_;
  std::shared_ptr<std::vector<double>> data_;
};

/// Frozen Monte Carlo draws for the physical EIG: prior node selection by
/// inverse CDF of u, and standard-normal noise z.
struct PhysicalDraws {
  std::vector<double> u;
  std::vector<double> z;
};

PhysicalDraws draw_physical(int samples, Rng& rng);

double eig_physical(const Design& d, const GridPosterior& prior, const PredictionCache& cache, double noise_var,
                    const PhysicalDraws& draws);

struct PhysicalSearch {
  double step_box = 0.2;
  int candidates = 9;
  int samples = 30;
};

struct PhysicalDesignResult {
  Design design;
  double eig = 0.0;
  std::vector<Design> candidates;
  std::vector<double> values;
  std::size_t chosen = 0;
};

/// Exhaustive search over a candidates x candidates lattice spanning the
/// step box around d_prev intersected with [0,1]^2. d_prev is candidate 0
/// and wins unless some candidate is strictly better.
PhysicalDesignResult optimize_design_physical(const Design& d_prev, const GridPosterior& prior,
                                              const PredictionCache& cache, double noise_var,
                                              const PhysicalSearch& search, Rng& rng);

}  // namespace adeki
