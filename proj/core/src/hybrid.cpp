#include "adeki/hybrid.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "adeki/error.hpp"
#include "adeki/memory.hpp"

namespace adeki {

Rng stage_rng(std::uint64_t seed, int stage, Purpose purpose) {
  return Rng(seed).substream({static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(purpose)});
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  auto solver = std::make_shared<FieldSolver>(cfg_.grid2d(), VelocityLaw{cfg_.velocity_c}, cfg_.solver_options());
  const std::vector<double> times(cfg_.stage_times.begin(), cfg_.stage_times.begin() + cfg_.n_stages);
  schedule_ = std::make_shared<TimeSchedule>(solver->schedule(times));
  const SourceParams p{cfg_.truth.x, cfg_.truth.y, cfg_.truth.h, cfg_.truth.s};
  truth_ = std::make_shared<ScalarFieldSeries>(
      truth_series(*solver, *schedule_, cfg_.truth.family, p, cfg_.solver.source_quad));
  solver_ = std::move(solver);
  if (cfg_.model.error == ErrorModel::strength) {
    bank_ = std::make_shared<UnitFieldBank>(*solver_, *schedule_, cfg_.model.family, cfg_.model.h,
                                            cfg_.solver.source_quad, cfg_.physical.lattice_n,
                                            cfg_.physical.cache_stride);
  }
}

GridPosterior Experiment::initial_prior() const {
  const PriorConfig& p = cfg_.physical.prior;
  GridPosterior prior = p.type == "gaussian"
                            ? GridPosterior::gaussian(cfg_.physical.lattice_n, p.mean_x, p.mean_y, p.sd)
                            : GridPosterior(cfg_.physical.lattice_n);
  if (p.flatten_power != 1.0) prior = flatten_prior(prior, p.flatten_power);
  return prior;
}

VectorXd Experiment::initial_psi(std::uint64_t seed) const {
  if (cfg_.model.error == ErrorModel::strength) return VectorXd::Constant(1, cfg_.model.s);
  Rng rng = stage_rng(seed, 0, Purpose::init);
  return init_net_params(rng, cfg_.model.init_sd);
}

PredictionCache Experiment::cache(int stage_index, const VectorXd& psi) const {
  if (bank_) return bank_->cache(static_cast<std::size_t>(stage_index), psi[0]);
  return build_prediction_cache(stage(stage_index), cfg_.model_spec(), psi, cfg_.physical.lattice_n,
                                cfg_.physical.cache_stride);
}

RunState initial_state(const Experiment& ex, std::uint64_t seed) {
  RunState s{ex.initial_prior(), ex.initial_psi(seed), {}, {}, {}};
  s.d_prev = Design{ex.config().initial_x, ex.config().initial_y, 0.0};
  return s;
}

namespace {

AdOptions ad_options(const NetworkConfig& n) {
  AdOptions o;
  o.eki.iterations = n.iterations;
  o.eki.kl_tol = n.kl_tol;
  o.mode = n.checkpoint;
  o.truncate_theta_chain = n.truncate_theta_chain;
  return o;
}

EigSampleSet network_samples(const Experiment& ex, const VectorXd& psi, Rng& rng) {
  const NetworkConfig& n = ex.config().network;
  const VectorXd var = VectorXd::Constant(psi.size(), n.prior_var);
  return draw_eig_samples(psi, var, n.ensemble_size, n.iterations, n.eig_samples, ex.gamma(), n.data_source,
                          ex.truth(), rng);
}

void train_step(const Experiment& ex, RunState& state, StageRecord& rec, const PhysMap& map) {
  const TrainConfig& t = ex.config().network.train;
  const RecordLoss loss(ex.solver(), ex.schedule(), ex.config().model_spec(), map.x, map.y, state.data);
  TrainOptions to;
  to.max_epochs = t.max_epochs;
  to.plateau = t.plateau;
  to.initial_step = t.step;
  to.growth = t.growth;
  const TrainResult tr = train(state.psi, loss.as_loss(), to);
  rec.train_loss_before = tr.initial_loss;
  rec.train_loss_after = tr.best_loss;
  rec.train_epochs = tr.epochs;
  state.psi = tr.params;
}

GridPosterior recondition(const Experiment& ex, const RunState& state, const GridPosterior& prior,
                          const StageRecord& rec, int k) {
  const double nv = ex.noise_var();
  std::vector<double> g;
  if (!ex.config().physical.recondition_history) {
    ex.cache(k, state.psi).predict_all(rec.d_g, g);
    return posterior_update_log(prior, log_likelihood_grid(rec.y_g, g, nv));
  }
  GridPosterior post = ex.initial_prior();
  for (const TrainingRecord& r : state.physical) {
    ex.cache(r.stage - 1, state.psi).predict_all(Design{r.x, r.y, r.t}, g);
    post = posterior_update_log(post, log_likelihood_grid(r.value, g, nv));
  }
  return post;
}

void network_step(const Experiment& ex, RunState& state, StageRecord& rec, int k, std::uint64_t seed) {
  const ExperimentConfig& cfg = ex.config();
  const NetworkConfig& n = cfg.network;
  const ModelSpec spec = cfg.model_spec();
  const SourceDesignModel model(ex.stage(k), spec, rec.before.map.x, rec.before.map.y, n.strategy);
  const MatrixXd gamma = ex.gamma();
  const AdOptions ad = ad_options(n);

  Rng eig_rng = stage_rng(seed, rec.stage, Purpose::network_eig);
  const EigSampleSet samples = network_samples(ex, state.psi, eig_rng);
  const DesignObjective objective = [&](const Design& d) {
    return grad_eig_wrt_design(d, samples, model, gamma, ad);
  };
  OptimizerOptions oo;
  oo.step = n.optimizer.step;
  oo.max_iters = n.optimizer.max_iters;
  oo.max_halvings = n.optimizer.max_halvings;
  oo.tol = n.optimizer.tol;
  oo.grid = &ex.solver()->grid();
  const OptimizerTrace trace = optimize_design(rec.d_g, objective, oo);
  rec.d_nn_start = trace.designs.front();
  rec.d_nn = trace.designs.back();
  rec.nn_trajectory = trace.designs;
  rec.nn_objective = trace.values;
  rec.nn_stop_reason = trace.stop_reason;
  rec.kl_trace_start = eig_estimate(rec.d_nn_start, samples, model, gamma, ad.eki).mean_trace;
  rec.kl_trace_final = eig_estimate(rec.d_nn, samples, model, gamma, ad.eki).mean_trace;

  Rng meas_rng = stage_rng(seed, rec.stage, Purpose::truth_nn);
  rec.y_nn = measure_truth(*ex.truth(), rec.d_nn, ex.noise_var(), meas_rng).value;
  if (n.train.include_physical) state.data.push_back({rec.d_g.x, rec.d_g.y, rec.time, rec.y_g, rec.stage});
  state.data.push_back({rec.d_nn.x, rec.d_nn.y, rec.time, rec.y_nn, rec.stage});

  if (n.nn_update == NetworkUpdate::train) {
    train_step(ex, state, rec, rec.before.map);
  } else {
    Rng rng = stage_rng(seed, rec.stage, Purpose::eki_mean);
    const VectorXd var = VectorXd::Constant(state.psi.size(), n.prior_var);
    const KlSample sample = draw_kl_sample(state.psi, var, n.ensemble_size, n.iterations, gamma, rng);
    const auto bound = model.bind(rec.d_nn);
    const EkiRun run = run_eki(sample, VectorXd::Constant(1, rec.y_nn), gamma, *bound, ad.eki);
    state.psi = run.theta.back().colwise().mean().transpose();
  }
}

}  // namespace

StageRecord run_stage(const Experiment& ex, RunState& state, int k, std::uint64_t seed, bool corrected) {
  const ExperimentConfig& cfg = ex.config();
  require(k >= 0 && k < cfg.n_stages, ErrorKind::invalid_argument, "stage index out of range");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t mem0 = MemoryTracker::reset_peak();

  StageRecord rec;
  rec.stage = k + 1;
  rec.time = cfg.stage_times[static_cast<std::size_t>(k)];
  rec.seed = seed;
  rec.corrected = corrected;
  rec.psi_before = state.psi;
  const GridPosterior prior = state.posterior;
  const double nv = ex.noise_var();

  Design prev = state.d_prev;
  prev.t = rec.time;
  const PhysicalSearch search{cfg.physical.step_box, cfg.physical.candidates, cfg.physical.eig_samples};
  std::vector<double> g;
  {
    const PredictionCache cache = ex.cache(k, state.psi);
    Rng eig_rng = stage_rng(seed, rec.stage, Purpose::physical_eig);
    const PhysicalDesignResult phys = optimize_design_physical(prev, prior, cache, nv, search, eig_rng);
    rec.d_g = phys.design;
    rec.d_g.t = rec.time;
    rec.eig_g = phys.eig;
    Rng meas_rng = stage_rng(seed, rec.stage, Purpose::truth_g);
    rec.y_g = measure_truth(*ex.truth(), rec.d_g, nv, meas_rng).value;
    cache.predict_all(rec.d_g, g);
  }
  GridPosterior post = posterior_update_log(prior, log_likelihood_grid(rec.y_g, g, nv));
  state.physical.push_back({rec.d_g.x, rec.d_g.y, rec.time, rec.y_g, rec.stage});
  rec.before = posterior_metrics(post, cfg.truth.x, cfg.truth.y);
  rec.posterior_kl = kl_utility(post, prior);

  if (corrected && k > 0) {
    rec.network_step = true;
    RunState trial = state;
    try {
      network_step(ex, trial, rec, k, seed);
      state = std::move(trial);
    } catch (const Error& e) {
      rec.network_failed = true;
      rec.failure = e.what();
    }
    if (state.psi != rec.psi_before) post = recondition(ex, state, prior, rec, k);
  }
  rec.psi_after = state.psi;
  rec.after = posterior_metrics(post, cfg.truth.x, cfg.truth.y);
  state.posterior = std::move(post);
  state.d_prev = rec.d_g;

  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.peak_bytes = MemoryTracker::peak() - mem0;
  return rec;
}

RunResult run_sequential(const Experiment& ex, int n_stages, std::uint64_t seed, bool corrected) {
  require(n_stages >= 1 && n_stages <= ex.config().n_stages, ErrorKind::invalid_argument,
          "stage count must be between 1 and the configured number of stages");
  RunResult r;
  r.corrected = corrected;
  r.state = initial_state(ex, seed);
  for (int k = 0; k < n_stages; ++k) {
    r.records.push_back(run_stage(ex, r.state, k, seed, corrected));
    r.posteriors.push_back(r.state.posterior);
  }
  return r;
}

namespace {

FieldError window_error(const Grid2D& grid, const Field& model, const Field& truth, double x0, double x1, double y0,
                        double y1, int n) {
  std::vector<double> m, t;
  m.reserve(static_cast<std::size_t>(n) * n);
  t.reserve(m.capacity());
  for (int j = 0; j < n; ++j) {
    const double y = y0 + (y1 - y0) * j / (n - 1);
    for (int i = 0; i < n; ++i) {
      const double x = x0 + (x1 - x0) * i / (n - 1);
      m.push_back(interpolate_with_grad(grid, model, x, y).value);
      t.push_back(interpolate_with_grad(grid, truth, x, y).value);
    }
  }
  return field_error(m, t);
}

std::vector<FieldErrorRow> error_rows(const Experiment& ex, const RunResult& run, const RunResult& reference) {
  const Grid2D& grid = ex.solver()->grid();
  const ModelSpec spec = ex.config().model_spec();
  constexpr double kHalf = 0.04;
  std::vector<FieldErrorRow> rows;
  const std::size_t n = std::min(run.records.size(), reference.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const StageRecord& rec = run.records[i];
    const SourceEvaluator ev(grid, spec, rec.after.map.x, rec.after.map.y);
    Field src;
    ev.field(rec.psi_after, src);
    const std::size_t last = std::min(i + 1, ex.schedule()->snapshot_times.size() - 1);
    const ScalarFieldSeries model = ex.solver()->solve(src, *ex.schedule(), last);
    FieldErrorRow row;
    row.stage = rec.stage;
    const Field& truth_now = ex.truth()->values[i];
    row.total = window_error(grid, model.values[i], truth_now, 0.0, 1.0, 0.0, 1.0, 51);
    const Design& c = reference.records[i].d_g;
    row.local = window_error(grid, model.values[i], truth_now, c.x - kHalf, c.x + kHalf, c.y - kHalf, c.y + kHalf, 9);
    if (i + 1 < n) {
      const Design& cn = reference.records[i + 1].d_g;
      row.next_local = window_error(grid, model.values[i + 1], ex.truth()->values[i + 1], cn.x - kHalf,
                                    cn.x + kHalf, cn.y - kHalf, cn.y + kHalf, 9);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

FieldErrorReport field_error_report(const Experiment& ex, const RunResult& corrected, const RunResult& baseline) {
  FieldErrorReport r;
  r.corrected = error_rows(ex, corrected, corrected);
  r.baseline = error_rows(ex, baseline, corrected);
  return r;
}

TraceComparison compare_design_traces(const Experiment& ex, const StageRecord& record, int seeds,
                                      std::uint64_t base_seed) {
  require(record.network_step && !record.network_failed, ErrorKind::invalid_argument,
          "stage has no network design trajectory");
  require(seeds >= 1, ErrorKind::invalid_argument, "at least one ensemble seed is required");
  const ExperimentConfig& cfg = ex.config();
  const SourceDesignModel model(ex.stage(record.stage - 1), cfg.model_spec(), record.before.map.x,
                                record.before.map.y, cfg.network.strategy);
  const AdOptions ad = ad_options(cfg.network);
  TraceComparison out;
  const Rng root(base_seed);
  for (int s = 0; s < seeds; ++s) {
    Rng rng = root.substream({static_cast<std::uint64_t>(s)});
    const EigSampleSet samples = network_samples(ex, record.psi_before, rng);
    const auto a = eig_estimate(record.d_nn_start, samples, model, ex.gamma(), ad.eki).mean_trace;
    const auto b = eig_estimate(record.d_nn, samples, model, ex.gamma(), ad.eki).mean_trace;
    if (out.start.size() < a.size()) out.start.resize(a.size(), 0.0);
    if (out.final.size() < b.size()) out.final.resize(b.size(), 0.0);
    for (std::size_t n = 0; n < a.size(); ++n) out.start[n] += a[n] / seeds;
    for (std::size_t n = 0; n < b.size(); ++n) out.final[n] += b[n] / seeds;
  }
  return out;
}

}  // namespace adeki
