#include "adeki/forward_model.hpp"

#include <cmath>

#include "adeki/error.hpp"
#include "adeki/observe.hpp"

namespace adeki {

void family_source(const Grid2D& grid, SourceFamily family, const SourceParams& p, int quad, Field& out) {
  p.validate();
  require(quad >= 1, ErrorKind::invalid_argument, "source quadrature needs at least one point per axis");
  if (family == SourceFamily::gaussian)
    discretize_source(grid, [&](double x, double y) { return gaussian_source(x, y, p); }, quad, out);
  else
    discretize_source(grid, [&](double x, double y) { return cauchy_source(x, y, p); }, quad, out);
}

SourceEvaluator::SourceEvaluator(const Grid2D& grid, const ModelSpec& spec, double theta_x, double theta_y)
    : grid_(grid), spec_(spec) {
  SourceParams p{theta_x, theta_y, spec.theta_h, spec.error == ErrorModel::strength ? 1.0 : spec.theta_s};
  family_source(grid, spec.family, p, spec.quad, base_);
  if (spec.error == ErrorModel::network) {
    in_x_.resize(grid.size());
    in_y_.resize(grid.size());
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        in_x_[grid.index(i, j)] = (grid.x(i) - theta_x) * spec.input_scale;
        in_y_[grid.index(i, j)] = (grid.y(j) - theta_y) * spec.input_scale;
      }
    }
  }
}

void SourceEvaluator::correction(const VectorXd& psi, Field& out) const {
  if (spec_.error == ErrorModel::strength) {
    out.clear();
    return;
  }
  require(psi.size() == net::kParams, ErrorKind::invalid_argument, "network parameter vector must have 37 entries");
  out.resize(base_.size());
  for (std::size_t k = 0; k < base_.size(); ++k) out[k] = nn_forward(in_x_[k], in_y_[k], psi.data());
}

void SourceEvaluator::field(const VectorXd& psi, Field& out) const {
  require(psi.size() == param_dim(), ErrorKind::invalid_argument, "error parameter vector has the wrong size");
  if (spec_.error == ErrorModel::strength) {
    out.resize(base_.size());
    for (std::size_t k = 0; k < base_.size(); ++k) out[k] = psi[0] * base_[k];
    return;
  }
  correction(psi, out);
  for (std::size_t k = 0; k < base_.size(); ++k) out[k] += base_[k];
}

void SourceEvaluator::accumulate_grad(const Field& kernel, const VectorXd& psi, double scale, double* grad) const {
  if (spec_.error == ErrorModel::strength) {
    grad[0] += scale * dot(kernel, base_);
    return;
  }
  for (std::size_t k = 0; k < kernel.size(); ++k) {
    if (kernel[k] != 0.0) nn_accumulate_grad(in_x_[k], in_y_[k], psi.data(), scale * kernel[k], grad);
  }
}

StageSetup make_stage(std::shared_ptr<const FieldSolver> solver, std::shared_ptr<const TimeSchedule> schedule,
                      double t) {
  require(solver && schedule, ErrorKind::invalid_argument, "stage needs a solver and a schedule");
  for (std::size_t k = 0; k < schedule->snapshot_times.size(); ++k) {
    if (std::abs(schedule->snapshot_times[k] - t) <= 1e-12 * std::max(1.0, std::abs(t)))
      return {std::move(solver), std::move(schedule), k};
  }
  fail(ErrorKind::missing_snapshot, "stage time " + std::to_string(t) + " is not in the schedule");
}

ScalarFieldSeries truth_series(const FieldSolver& solver, const TimeSchedule& schedule, SourceFamily family,
                               const SourceParams& p, int quad) {
  Field s;
  family_source(solver.grid(), family, p, quad, s);
  return solver.solve(s, schedule);
}

namespace {

void check_time(const StageSetup& stage, const Design& d) {
  const double t = stage.time();
  if (d.t != 0.0 && std::abs(d.t - t) > 1e-12 * std::max(1.0, t))
    fail(ErrorKind::missing_snapshot, "design time does not match the stage snapshot");
}

class DirectMap final : public BoundMap {
 public:
  DirectMap(const SourceDesignModel& model, const Design& d)
      : model_(model), d_(d), stencil_(bilinear_stencil(model.stage().solver->grid(), d.x, d.y)) {
    const StageSetup& st = model.stage();
    kernel_ = st.solver->adjoint_kernel(stencil_, *st.schedule, st.snapshot);
  }

  Eigen::Index param_dim() const override { return model_.param_dim(); }
  Eigen::Index data_dim() const override { return 1; }

  MapEval evaluate(const VectorXd& theta, bool with_grad, bool keep_state) const override {
    const StageSetup& st = model_.stage();
    Field src;
    model_.evaluator().field(theta, src);
    ScalarFieldSeries series = st.solver->solve(src, *st.schedule, st.snapshot);
    const Field& u = series.values.back();
    const Interpolated v = interpolate_with_grad(st.solver->grid(), u, d_.x, d_.y);
    MapEval e;
    e.g = VectorXd::Constant(1, v.value);
    if (with_grad) {
      e.dg_dd.resize(1, 2);
      e.dg_dd << v.dx, v.dy;
      VectorXd grad = VectorXd::Zero(theta.size());
      model_.evaluator().accumulate_grad(kernel_, theta, 1.0, grad.data());
      e.dg_dtheta = grad.transpose();
    }
    if (keep_state) e.state = std::make_shared<const Field>(std::move(series.values.back()));
    return e;
  }

 private:
  const SourceDesignModel& model_;
  Design d_;
  PointStencil stencil_;
  Field kernel_;
};

class GreenMap final : public BoundMap {
 public:
  GreenMap(const SourceDesignModel& model, const Design& d)
      : model_(model), stencil_(bilinear_stencil(model.stage().solver->grid(), d.x, d.y)) {
    const Field& base = model.evaluator().base();
    combined_.assign(base.size(), 0.0);
    for (int c = 0; c < 4; ++c) {
      kernels_[c] = model.node_kernel(stencil_.idx[c]);
      base_dot_[c] = dot(*kernels_[c], base);
      for (std::size_t k = 0; k < base.size(); ++k) combined_[k] += stencil_.w[c] * (*kernels_[c])[k];
    }
  }

  Eigen::Index param_dim() const override { return model_.param_dim(); }
  Eigen::Index data_dim() const override { return 1; }

  MapEval evaluate(const VectorXd& theta, bool with_grad, bool keep_state) const override {
    const SourceEvaluator& ev = model_.evaluator();
    require(theta.size() == ev.param_dim(), ErrorKind::invalid_argument, "error parameter vector has the wrong size");
    std::array<double, 4> node{};
    if (ev.spec().error == ErrorModel::strength) {
      for (int c = 0; c < 4; ++c) node[c] = theta[0] * base_dot_[c];
    } else {
      Field corr;
      ev.correction(theta, corr);
      for (int c = 0; c < 4; ++c) node[c] = base_dot_[c] + dot(*kernels_[c], corr);
    }
    MapEval e;
    double g = 0.0, gx = 0.0, gy = 0.0;
    for (int c = 0; c < 4; ++c) {
      g += stencil_.w[c] * node[c];
      gx += stencil_.wx[c] * node[c];
      gy += stencil_.wy[c] * node[c];
    }
    e.g = VectorXd::Constant(1, g);
    if (with_grad) {
      e.dg_dd.resize(1, 2);
      e.dg_dd << gx, gy;
      VectorXd grad = VectorXd::Zero(theta.size());
      ev.accumulate_grad(combined_, theta, 1.0, grad.data());
      e.dg_dtheta = grad.transpose();
    }
    if (keep_state) {
      auto s = std::make_shared<Field>();
      ev.field(theta, *s);
      e.state = std::move(s);
    }
    return e;
  }

 private:
  const SourceDesignModel& model_;
  PointStencil stencil_;
  std::array<std::shared_ptr<const Field>, 4> kernels_;
  std::array<double, 4> base_dot_{};
  Field combined_;
};

class ScaledMap final : public BoundMap {
 public:
  ScaledMap(const Grid2D& grid, std::shared_ptr<const Field> unit, const Design& d)
      : unit_(std::move(unit)), v_(interpolate_with_grad(grid, *unit_, d.x, d.y)) {}

  Eigen::Index param_dim() const override { return 1; }
  Eigen::Index data_dim() const override { return 1; }

  MapEval evaluate(const VectorXd& theta, bool with_grad, bool keep_state) const override {
    require(theta.size() == 1, ErrorKind::invalid_argument, "scaled strategy takes a scalar strength");
    MapEval e;
    e.g = VectorXd::Constant(1, theta[0] * v_.value);
    if (with_grad) {
      e.dg_dd.resize(1, 2);
      e.dg_dd << theta[0] * v_.dx, theta[0] * v_.dy;
      e.dg_dtheta = MatrixXd::Constant(1, 1, v_.value);
    }
    if (keep_state) {
      auto s = std::make_shared<Field>(*unit_);
      for (double& x : *s) x *= theta[0];
      e.state = std::move(s);
    }
    return e;
  }

 private:
  std::shared_ptr<const Field> unit_;
  Interpolated v_;
};

}  // namespace

SourceDesignModel::SourceDesignModel(StageSetup stage, ModelSpec spec, double theta_x, double theta_y,
                                     ForwardStrategy strategy)
    : stage_(std::move(stage)),
      spec_(spec),
      strategy_(strategy),
      evaluator_(stage_.solver->grid(), spec, theta_x, theta_y) {
  if (strategy_ == ForwardStrategy::scaled) {
    require(spec_.error == ErrorModel::strength, ErrorKind::invalid_argument,
            "the scaled strategy needs a model that is linear in its parameter");
    ScalarFieldSeries s = stage_.solver->solve(evaluator_.base(), *stage_.schedule, stage_.snapshot);
    unit_ = std::make_shared<const Field>(std::move(s.values.back()));
  }
}

std::shared_ptr<const Field> SourceDesignModel::node_kernel(std::size_t node) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = kernels_.find(node); it != kernels_.end()) return it->second;
  }
  const std::array<std::size_t, 1> nodes{node};
  const std::array<double, 1> weights{1.0};
  auto k = std::make_shared<const Field>(
      stage_.solver->adjoint_kernel(nodes, weights, *stage_.schedule, stage_.snapshot));
  std::lock_guard lock(mutex_);
  return kernels_.emplace(node, std::move(k)).first->second;
}

std::shared_ptr<const BoundMap> SourceDesignModel::bind(const Design& d) const {
  check_time(stage_, d);
  switch (strategy_) {
    case ForwardStrategy::direct:
      return std::make_shared<DirectMap>(*this, d);
    case ForwardStrategy::green:
      return std::make_shared<GreenMap>(*this, d);
    case ForwardStrategy::scaled:
      return std::make_shared<ScaledMap>(stage_.solver->grid(), unit_, d);
  }
  fail(ErrorKind::invalid_argument, "unknown forward strategy");
}

RecordLoss::RecordLoss(std::shared_ptr<const FieldSolver> solver, std::shared_ptr<const TimeSchedule> schedule,
                       const ModelSpec& spec, double theta_x, double theta_y, std::vector<TrainingRecord> records)
    : evaluator_(solver->grid(), spec, theta_x, theta_y), records_(std::move(records)) {
  require(!records_.empty(), ErrorKind::invalid_argument, "training needs at least one record");
  kernels_.reserve(records_.size());
  for (const TrainingRecord& r : records_) {
    const StageSetup st = make_stage(solver, schedule, r.t);
    kernels_.push_back(solver->adjoint_kernel(bilinear_stencil(solver->grid(), r.x, r.y), *schedule, st.snapshot));
  }
}

std::vector<double> RecordLoss::predictions(const VectorXd& psi) const {
  Field s;
  evaluator_.field(psi, s);
  std::vector<double> out;
  out.reserve(kernels_.size());
  for (const Field& k : kernels_) out.push_back(dot(k, s));
  return out;
}

double RecordLoss::operator()(const VectorXd& psi, VectorXd* grad) const {
  const std::vector<double> pred = predictions(psi);
  const double n = static_cast<double>(records_.size());
  double loss = 0.0;
  Field combined;
  if (grad) combined.assign(kernels_.front().size(), 0.0);
  for (std::size_t r = 0; r < records_.size(); ++r) {
    const double res = pred[r] - records_[r].value;
    loss += res * res / n;
    if (grad) {
      const double c = 2.0 * res / n;
      for (std::size_t k = 0; k < combined.size(); ++k) combined[k] += c * kernels_[r][k];
    }
  }
  if (grad) {
    *grad = VectorXd::Zero(psi.size());
    evaluator_.accumulate_grad(combined, psi, 1.0, grad->data());
  }
  return loss;
}

}  // namespace adeki
