#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "adeki/observe.hpp"
#include "adeki/random.hpp"

namespace adeki {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One forward-map evaluation. Jacobians are only filled when requested.
struct MapEval {
  VectorXd g;
  MatrixXd dg_dtheta;  // data_dim x param_dim
  MatrixXd dg_dd;      // data_dim x 2
  std::shared_ptr<const Field> state;  // retained solver state, if any
};

/// Forward map G(theta, d) with d fixed.
class BoundMap {
 public:
  virtual ~BoundMap() = default;
  virtual Eigen::Index param_dim() const = 0;
  virtual Eigen::Index data_dim() const = 0;
  virtual MapEval evaluate(const VectorXd& theta, bool with_grad, bool keep_state = false) const = 0;
};

/// Family of forward maps indexed by the design. bind() does all per-design
/// precomputation and must be safe to call concurrently.
class DesignModel {
 public:
  virtual ~DesignModel() = default;
  virtual Eigen::Index param_dim() const = 0;
  virtual Eigen::Index data_dim() const = 0;
  virtual std::shared_ptr<const BoundMap> bind(const Design& d) const = 0;
};

struct Observation {
  VectorXd y;
  MatrixXd dy_dd;  // data_dim x 2
};

/// Data as a function of the design; receives the bound model so predicted
/// data can be generated from it.
using ObservationFn = std::function<Observation(const Design&, const BoundMap&)>;

/// y = G(theta_m, d) + eta_m.
ObservationFn predicted_observation(VectorXd theta_m, VectorXd eta_m);

/// y = interpolated truth snapshot at d + eta.
ObservationFn measured_observation(std::shared_ptr<const ScalarFieldSeries> truth, VectorXd eta);

struct EnsembleStats {
  VectorXd theta_mean;
  VectorXd g_mean;
  MatrixXd c_tt;
  MatrixXd c_tg;
  MatrixXd c_gg;
};

/// Members are rows. Covariances use 1/(J-1).
EnsembleStats ensemble_stats(const MatrixXd& theta, const MatrixXd& g);
MatrixXd ensemble_cov(const MatrixXd& theta);

/// Perturbed-observation update with explicit noise draws (rows of eps).
MatrixXd eki_step(const MatrixXd& theta, const VectorXd& y, const MatrixXd& g, const MatrixXd& gamma,
                  const MatrixXd& eps);
MatrixXd eki_step(const MatrixXd& theta, const VectorXd& y, const MatrixXd& g, const MatrixXd& gamma, Rng& rng);

/// J x m matrix of N(0, gamma) rows.
MatrixXd draw_noise(const MatrixXd& gamma, Eigen::Index rows, Rng& rng);

struct KlDiagnostics {
  double jitter0 = 0.0;
  double jitterK = 0.0;
  int clipped0 = 0;
  int clippedK = 0;
};

/// Regularized precision and log-determinant of an ensemble covariance.
struct CovFactor {
  MatrixXd cov;        // after jitter
  MatrixXd precision;  // inverse of cov
  double logdet = 0.0;
  double jitter = 0.0;
  int clipped = 0;
};
CovFactor factor_covariance(const MatrixXd& cov);

/// Gaussian KL between the moment fits of ensK (posterior) and ens0 (prior).
double ensemble_kl(const MatrixXd& ens0, const MatrixXd& ensK, KlDiagnostics* diag = nullptr);

struct EkiOptions {
  int iterations = 3;
  double kl_tol = 0.0;  // > 0 stops once the KL increment falls below it
};

MatrixXd evaluate_members(const BoundMap& map, const MatrixXd& theta);

/// Frozen randomness of one KL evaluation: initial ensemble and the
/// observation perturbations of every iteration.
struct KlSample {
  MatrixXd theta0;
  std::vector<MatrixXd> eps;
};

KlSample draw_kl_sample(const VectorXd& prior_mean, const VectorXd& prior_var, Eigen::Index ensemble_size,
                        int iterations, const MatrixXd& gamma, Rng& rng);

struct EkiRun {
  std::vector<MatrixXd> theta;  // theta[0] .. theta[K]
  std::vector<MatrixXd> g;      // g[0] .. g[K-1]
  std::vector<double> kl_trace;  // KL(ens0, ens_n) for n = 1..K
  KlDiagnostics diag;
};

/// Member predictions for iteration n; rows of theta are members.
using MemberEvaluator = std::function<MatrixXd(const MatrixXd& theta, int n)>;

/// Iterates eki_step against the same observation y.
EkiRun run_eki(const KlSample& sample, const VectorXd& y, const MatrixXd& gamma,
               const MemberEvaluator& evaluate, const EkiOptions& options);
EkiRun run_eki(const KlSample& sample, const VectorXd& y, const MatrixXd& gamma, const BoundMap& map,
               const EkiOptions& options);
EkiRun run_eki(const MatrixXd& theta0, const VectorXd& y, const MatrixXd& gamma, const BoundMap& map,
               const EkiOptions& options, Rng& rng);

/// Reparameterized EIG samples held fixed across designs.
struct EigSampleSet {
  std::vector<KlSample> samples;
  std::vector<ObservationFn> observations;
};

enum class DataSource { predicted, measured };

/// theta_m ~ N(prior_mean, diag(prior_var)), eta_m ~ N(0, gamma). Measured
/// mode ignores theta_m and uses the truth snapshot.
EigSampleSet draw_eig_samples(const VectorXd& prior_mean, const VectorXd& prior_var, Eigen::Index ensemble_size,
                              int iterations, int outer_samples, const MatrixXd& gamma, DataSource source,
                              std::shared_ptr<const ScalarFieldSeries> truth, Rng& rng);

struct EigValue {
  double value = 0.0;
  std::vector<double> per_sample;
  std::vector<double> mean_trace;  // sample-averaged KL per iteration
};

EigValue eig_estimate(const Design& d, const EigSampleSet& samples, const DesignModel& model,
                      const MatrixXd& gamma, const EkiOptions& options);

}  // namespace adeki
