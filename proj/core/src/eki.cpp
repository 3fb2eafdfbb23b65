#include "adeki/eki.hpp"

#include <cmath>

#include "adeki/error.hpp"
#include "adeki/metrics.hpp"
#include "adeki/parallel.hpp"

namespace adeki {

ObservationFn predicted_observation(VectorXd theta_m, VectorXd eta_m) {
  return [theta_m = std::move(theta_m), eta_m = std::move(eta_m)](const Design&, const BoundMap& map) {
    MapEval e = map.evaluate(theta_m, true);
    return Observation{e.g + eta_m, e.dg_dd};
  };
}

ObservationFn measured_observation(std::shared_ptr<const ScalarFieldSeries> truth, VectorXd eta) {
  require(truth != nullptr, ErrorKind::invalid_argument, "measured data requires a truth field");
  return [truth = std::move(truth), eta = std::move(eta)](const Design& d, const BoundMap&) {
    const Interpolated v = interpolate_with_grad(truth->grid, truth->at(d.t), d.x, d.y);
    Observation o;
    o.y = VectorXd::Constant(1, v.value) + eta;
    o.dy_dd.resize(1, 2);
    o.dy_dd << v.dx, v.dy;
    return o;
  };
}

EnsembleStats ensemble_stats(const MatrixXd& theta, const MatrixXd& g) {
  const Eigen::Index J = theta.rows();
  require(J >= 2, ErrorKind::invalid_argument, "ensemble needs at least two members");
  require(g.rows() == J, ErrorKind::invalid_argument, "one prediction per member is required");
  EnsembleStats s;
  s.theta_mean = theta.colwise().mean().transpose();
  s.g_mean = g.colwise().mean().transpose();
  const MatrixXd a = theta.rowwise() - s.theta_mean.transpose();
  const MatrixXd b = g.rowwise() - s.g_mean.transpose();
  const double inv = 1.0 / static_cast<double>(J - 1);
  s.c_tt = a.transpose() * a * inv;
  s.c_tg = a.transpose() * b * inv;
  s.c_gg = b.transpose() * b * inv;
  return s;
}

MatrixXd ensemble_cov(const MatrixXd& theta) {
  require(theta.rows() >= 2, ErrorKind::invalid_argument, "ensemble needs at least two members");
  const MatrixXd a = theta.rowwise() - theta.colwise().mean();
  return a.transpose() * a / static_cast<double>(theta.rows() - 1);
}

MatrixXd draw_noise(const MatrixXd& gamma, Eigen::Index rows, Rng& rng) {
  Eigen::LLT<MatrixXd> llt(gamma);
  require(llt.info() == Eigen::Success, ErrorKind::invalid_argument, "noise covariance must be positive definite");
  MatrixXd z(rows, gamma.rows());
  for (Eigen::Index j = 0; j < rows; ++j)
    for (Eigen::Index k = 0; k < gamma.rows(); ++k) z(j, k) = rng.normal();
  return z * llt.matrixL().transpose();
}

MatrixXd eki_step(const MatrixXd& theta, const VectorXd& y, const MatrixXd& g, const MatrixXd& gamma,
                  const MatrixXd& eps) {
  const EnsembleStats s = ensemble_stats(theta, g);
  require(eps.rows() == theta.rows() && eps.cols() == y.size(), ErrorKind::invalid_argument,
          "perturbation matrix has the wrong shape");
  const MatrixXd S = s.c_gg + gamma;
  Eigen::LDLT<MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
    fail(ErrorKind::numerical_failure, "innovation covariance is singular");
  const MatrixXd gain_t = ldlt.solve(s.c_tg.transpose());  // K^T
  const MatrixXd resid = (eps.rowwise() + y.transpose()) - g;
  return theta + resid * gain_t;
}

MatrixXd eki_step(const MatrixXd& theta, const VectorXd& y, const MatrixXd& g, const MatrixXd& gamma, Rng& rng) {
  return eki_step(theta, y, g, gamma, draw_noise(gamma, theta.rows(), rng));
}

CovFactor factor_covariance(const MatrixXd& cov) {
  const Eigen::Index d = cov.rows();
  CovFactor f;
  f.cov = 0.5 * (cov + cov.transpose());
  const double tr = f.cov.trace();
  require(std::isfinite(tr) && tr > 0.0, ErrorKind::numerical_failure, "ensemble covariance has zero trace");
  const double floor = 1e-8 * tr / static_cast<double>(d);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(f.cov);
  require(es.info() == Eigen::Success, ErrorKind::numerical_failure, "covariance eigen-decomposition failed");
  const double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
  if (lmin <= 0.0 || lmax > 1e12 * lmin) {
    f.jitter = floor;
    f.cov.diagonal().array() += floor;
  }
  Eigen::VectorXd ev = es.eigenvalues().array() + f.jitter;
  for (Eigen::Index k = 0; k < d; ++k) {
    if (ev[k] < -floor) fail(ErrorKind::numerical_failure, "ensemble covariance is indefinite after jitter");
    if (ev[k] < floor) {
      ev[k] = floor;
      ++f.clipped;
    }
    f.logdet += std::log(ev[k]);
  }
  const MatrixXd& V = es.eigenvectors();
  f.precision = V * ev.cwiseInverse().asDiagonal() * V.transpose();
  return f;
}

double ensemble_kl(const MatrixXd& ens0, const MatrixXd& ensK, KlDiagnostics* diag) {
  require(ens0.cols() == ensK.cols(), ErrorKind::invalid_argument, "ensembles differ in parameter dimension");
  const CovFactor f0 = factor_covariance(ensemble_cov(ens0));
  const CovFactor fK = factor_covariance(ensemble_cov(ensK));
  const VectorXd m = (ensK.colwise().mean() - ens0.colwise().mean()).transpose();
  if (diag) {
    diag->jitter0 = f0.jitter;
    diag->jitterK = fK.jitter;
    diag->clipped0 = f0.clipped;
    diag->clippedK = fK.clipped;
  }
  const double tr = (f0.precision.cwiseProduct(fK.cov - f0.cov)).sum();
  return 0.5 * (tr + (f0.logdet - fK.logdet) + m.dot(f0.precision * m));
}

KlSample draw_kl_sample(const VectorXd& prior_mean, const VectorXd& prior_var, Eigen::Index ensemble_size,
                        int iterations, const MatrixXd& gamma, Rng& rng) {
  require(ensemble_size >= 2, ErrorKind::invalid_argument, "ensemble size must be >= 2");
  require(iterations >= 1, ErrorKind::invalid_argument, "EKI needs at least one iteration");
  require(prior_mean.size() == prior_var.size(), ErrorKind::invalid_argument, "prior mean/variance size mismatch");
  KlSample s;
  s.theta0.resize(ensemble_size, prior_mean.size());
  for (Eigen::Index j = 0; j < ensemble_size; ++j)
    for (Eigen::Index k = 0; k < prior_mean.size(); ++k)
      s.theta0(j, k) = prior_mean[k] + std::sqrt(prior_var[k]) * rng.normal();
  for (int n = 0; n < iterations; ++n) s.eps.push_back(draw_noise(gamma, ensemble_size, rng));
  return s;
}

MatrixXd evaluate_members(const BoundMap& map, const MatrixXd& theta) {
  MatrixXd g(theta.rows(), map.data_dim());
  parallel_for(static_cast<std::size_t>(theta.rows()), [&](std::size_t j) {
    const auto row = static_cast<Eigen::Index>(j);
    g.row(row) = map.evaluate(theta.row(row).transpose(), false).g.transpose();
  });
  return g;
}

EkiRun run_eki(const KlSample& sample, const VectorXd& y, const MatrixXd& gamma, const BoundMap& map,
               const EkiOptions& options) {
  return run_eki(sample, y, gamma, [&map](const MatrixXd& theta, int) { return evaluate_members(map, theta); },
                 options);
}

EkiRun run_eki(const KlSample& sample, const VectorXd& y, const MatrixXd& gamma,
               const MemberEvaluator& evaluate, const EkiOptions& options) {
  require(options.iterations >= 1, ErrorKind::invalid_argument, "EKI needs at least one iteration");
  require(static_cast<int>(sample.eps.size()) >= options.iterations, ErrorKind::invalid_argument,
          "not enough frozen perturbations for the requested iterations");
  EkiRun run;
  run.theta.push_back(sample.theta0);
  for (int n = 0; n < options.iterations; ++n) {
    run.g.push_back(evaluate(run.theta.back(), n));
    run.theta.push_back(eki_step(run.theta.back(), y, run.g.back(), gamma, sample.eps[n]));
    run.kl_trace.push_back(ensemble_kl(sample.theta0, run.theta.back(), &run.diag));
    if (options.kl_tol > 0.0 && n > 0 && std::abs(run.kl_trace[n] - run.kl_trace[n - 1]) < options.kl_tol) break;
  }
  return run;
}

EkiRun run_eki(const MatrixXd& theta0, const VectorXd& y, const MatrixXd& gamma, const BoundMap& map,
               const EkiOptions& options, Rng& rng) {
  KlSample s;
  s.theta0 = theta0;
  for (int n = 0; n < options.iterations; ++n) s.eps.push_back(draw_noise(gamma, theta0.rows(), rng));
  return run_eki(s, y, gamma, map, options);
}

EigSampleSet draw_eig_samples(const VectorXd& prior_mean, const VectorXd& prior_var, Eigen::Index ensemble_size,
                              int iterations, int outer_samples, const MatrixXd& gamma, DataSource source,
                              std::shared_ptr<const ScalarFieldSeries> truth, Rng& rng) {
  require(outer_samples >= 1, ErrorKind::invalid_argument, "EIG needs at least one outer sample");
  EigSampleSet set;
  for (int m = 0; m < outer_samples; ++m) {
    Rng sub = rng.substream({static_cast<std::uint64_t>(m)});
    VectorXd theta_m(prior_mean.size());
    for (Eigen::Index k = 0; k < prior_mean.size(); ++k)
      theta_m[k] = prior_mean[k] + std::sqrt(prior_var[k]) * sub.normal();
    VectorXd eta = draw_noise(gamma, 1, sub).row(0).transpose();
    set.samples.push_back(draw_kl_sample(prior_mean, prior_var, ensemble_size, iterations, gamma, sub));
    if (source == DataSource::predicted)
      set.observations.push_back(predicted_observation(std::move(theta_m), std::move(eta)));
    else
      set.observations.push_back(measured_observation(truth, std::move(eta)));
  }
  return set;
}

EigValue eig_estimate(const Design& d, const EigSampleSet& samples, const DesignModel& model,
                      const MatrixXd& gamma, const EkiOptions& options) {
  const auto bound = model.bind(d);
  const std::size_t M = samples.samples.size();
  std::vector<std::vector<double>> traces(M);
  for (std::size_t m = 0; m < M; ++m) {
    const Observation obs = samples.observations[m](d, *bound);
    traces[m] = run_eki(samples.samples[m], obs.y, gamma, *bound, options).kl_trace;
  }
  EigValue out;
  for (std::size_t m = 0; m < M; ++m) {
    out.per_sample.push_back(traces[m].back());
    out.value += traces[m].back();
    if (out.mean_trace.size() < traces[m].size()) out.mean_trace.resize(traces[m].size(), 0.0);
    for (std::size_t n = 0; n < traces[m].size(); ++n) out.mean_trace[n] += traces[m][n] / static_cast<double>(M);
  }
  out.value /= static_cast<double>(M);
  return out;
}

}  // namespace adeki
