#include "adeki/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "adeki/error.hpp"
#include "adeki/memory.hpp"
#include "adeki/metrics.hpp"

namespace adeki {

namespace {

struct Bench {
  std::shared_ptr<const FieldSolver> solver;
  std::shared_ptr<const TimeSchedule> schedule;
  std::shared_ptr<const ScalarFieldSeries> truth;
};

Bench setup(const ExperimentConfig& cfg, int grid_n, double t) {
  Bench b;
  auto solver =
      std::make_shared<FieldSolver>(Grid2D::square(cfg.grid.lo, cfg.grid.hi, grid_n), VelocityLaw{cfg.velocity_c},
                                    cfg.solver_options());
  const std::vector<double> times{t};
  b.schedule = std::make_shared<TimeSchedule>(solver->schedule(times));
  const SourceParams p{cfg.truth.x, cfg.truth.y, cfg.truth.h, cfg.truth.s};
  b.truth = std::make_shared<ScalarFieldSeries>(
      truth_series(*solver, *b.schedule, cfg.truth.family, p, cfg.solver.source_quad));
  b.solver = std::move(solver);
  return b;
}

ModelSpec strength_spec(const ExperimentConfig& cfg) {
  ModelSpec s = cfg.model_spec();
  s.error = ErrorModel::strength;
  return s;
}

double off_line_distance(double v, double origin, double h) {
  const double s = (v - origin) / h;
  return std::abs(s - std::round(s)) * h;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

}  // namespace

GradcheckReport run_gradcheck(const ExperimentConfig& cfg, bool truncate_theta_chain) {
  const GradcheckConfig& gc = cfg.gradcheck;
  const auto t0 = std::chrono::steady_clock::now();
  const Bench b = setup(cfg, gc.grid_n, gc.stage_time);
  const SourceDesignModel model(make_stage(b.solver, b.schedule, gc.stage_time), strength_spec(cfg), gc.theta_x,
                                gc.theta_y, ForwardStrategy::direct);
  const MatrixXd gamma = MatrixXd::Constant(1, 1, cfg.noise_std * cfg.noise_std);
  Rng rng = Rng(cfg.seed).substream({0x67726164ULL});
  Rng sample_rng = rng.substream(1);
  const KlSample sample = draw_kl_sample(VectorXd::Constant(1, cfg.model.s), VectorXd::Constant(1, cfg.network.prior_var),
                                         gc.ensemble_size, gc.iterations, gamma, sample_rng);
  Rng noise_rng = rng.substream(2);
  const VectorXd eta = draw_noise(gamma, 1, noise_rng).row(0).transpose();
  const ObservationFn observe = measured_observation(b.truth, eta);

  AdOptions ad;
  ad.eki.iterations = gc.iterations;
  ad.truncate_theta_chain = truncate_theta_chain;

  const Grid2D& grid = b.solver->grid();
  const double margin = 2.0 * gc.fd_step;
  Rng design_rng = rng.substream(3);
  std::vector<Design> designs;
  while (static_cast<int>(designs.size()) < gc.designs) {
    Design d{gc.lo + (gc.hi - gc.lo) * design_rng.uniform(), gc.lo + (gc.hi - gc.lo) * design_rng.uniform(),
             gc.stage_time};
    if (off_line_distance(d.x, grid.x_min, grid.hx()) > margin && off_line_distance(d.y, grid.y_min, grid.hy()) > margin)
      designs.push_back(d);
  }

  const auto value_at = [&](const Design& d) {
    const auto bound = model.bind(d);
    const Observation obs = observe(d, *bound);
    return run_eki(sample, obs.y, gamma, *bound, ad.eki).kl_trace.back();
  };

  GradcheckReport report;
  report.rows.resize(designs.size());
  for (std::size_t i = 0; i < designs.size(); ++i) {
    GradcheckRow& row = report.rows[i];
    row.design = designs[i];
    const DesignGradient g = grad_kl_wrt_design(row.design, sample, observe, model, gamma, ad);
    row.value = g.value;
    row.analytic = g.grad;
    for (int c = 0; c < 2; ++c) {
      Design up = row.design, dn = row.design;
      (c == 0 ? up.x : up.y) += gc.fd_step;
      (c == 0 ? dn.x : dn.y) -= gc.fd_step;
      row.fd[c] = (value_at(up) - value_at(dn)) / (2.0 * gc.fd_step);
    }
    row.rel_err = (row.analytic - row.fd).norm() / std::max({row.analytic.norm(), row.fd.norm(), 1e-6});
    row.pass = row.rel_err < gc.tol;
    report.passed += row.pass ? 1 : 0;
    report.max_rel_err = std::max(report.max_rel_err, row.rel_err);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string gradcheck_csv(const GradcheckReport& report) {
  std::ostringstream s;
  s << "x,y,kl,grad_x,grad_y,fd_x,fd_y,rel_err,pass\n";
  for (const GradcheckRow& r : report.rows)
    s << num(r.design.x) << ',' << num(r.design.y) << ',' << num(r.value) << ',' << num(r.analytic[0]) << ','
      << num(r.analytic[1]) << ',' << num(r.fd[0]) << ',' << num(r.fd[1]) << ',' << num(r.rel_err) << ','
      << (r.pass ? "PASS" : "FAIL") << '\n';
  return s.str();
}

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, BenchSweep sweep, CheckpointMode mode) {
  const BenchConfig& bc = cfg.bench;
  const Bench b = setup(cfg, bc.grid_n, bc.stage_time);
  const SourceDesignModel model(make_stage(b.solver, b.schedule, bc.stage_time), strength_spec(cfg), cfg.truth.x,
                                cfg.truth.y, ForwardStrategy::direct);
  const MatrixXd gamma = MatrixXd::Constant(1, 1, cfg.noise_std * cfg.noise_std);
  const Design d = nudge_off_grid(b.solver->grid(), {bc.design_x, bc.design_y, bc.stage_time});
  const std::vector<int>& points = sweep == BenchSweep::ensemble_size ? bc.ensemble_sizes : bc.iterations;

  std::vector<BenchRow> rows;
  for (int rep = 0; rep < bc.repetitions; ++rep) {
    for (int v : points) {
      BenchRow row;
      row.sweep = sweep == BenchSweep::ensemble_size ? "ensemble-size" : "iterations";
      row.ensemble_size = sweep == BenchSweep::ensemble_size ? v : bc.fixed_ensemble;
      row.iterations = sweep == BenchSweep::iterations ? v : bc.fixed_iterations;
      row.repetition = rep;
      row.mode = to_string(mode);
      Rng rng = Rng(cfg.seed).substream({static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(v)});
      const KlSample sample = draw_kl_sample(VectorXd::Constant(1, cfg.model.s),
                                             VectorXd::Constant(1, cfg.network.prior_var), row.ensemble_size,
                                             row.iterations, gamma, rng);
      const ObservationFn observe = measured_observation(b.truth, VectorXd::Zero(1));
      AdOptions ad;
      ad.eki.iterations = row.iterations;
      ad.mode = mode;
      const auto bound = model.bind(d);
      const std::size_t base = MemoryTracker::reset_peak();
      const auto t0 = std::chrono::steady_clock::now();
      const DesignGradient g = grad_kl_wrt_design(d, sample, observe, *bound, gamma, ad);
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.peak_bytes = MemoryTracker::peak() - base;
      require(std::isfinite(g.value), ErrorKind::numerical_failure, "benchmark produced a non-finite KL");
      rows.push_back(row);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream s;
  s << "sweep,ensemble_size,iterations,repetition,mode,seconds,peak_bytes\n";
  for (const BenchRow& r : rows)
    s << r.sweep << ',' << r.ensemble_size << ',' << r.iterations << ',' << r.repetition << ',' << r.mode << ','
      << num(r.seconds) << ',' << r.peak_bytes << '\n';
  return s.str();
}

BenchSummary summarize_bench(const std::vector<BenchRow>& rows, BenchSweep sweep) {
  std::map<int, std::pair<double, double>> acc;  // sweep value -> (seconds, bytes)
  std::map<int, int> count;
  for (const BenchRow& r : rows) {
    const int v = sweep == BenchSweep::ensemble_size ? r.ensemble_size : r.iterations;
    acc[v].first += r.seconds;
    acc[v].second += static_cast<double>(r.peak_bytes);
    ++count[v];
  }
  std::vector<double> x, t, m;
  for (const auto& [v, sums] : acc) {
    x.push_back(v);
    t.push_back(sums.first / count[v]);
    m.push_back(sums.second / count[v]);
  }
  BenchSummary s;
  if (x.size() >= 2) s.time_r2 = linear_fit_r2(x, t);
  if (!m.empty()) {
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    s.memory_spread = *lo > 0.0 ? (*hi - *lo) / *lo : 0.0;
  }
  return s;
}

}  // namespace adeki
