#include "adeki/field_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adeki/error.hpp"

namespace adeki {

void Grid2D::validate() const {
  require(nx >= 2 && ny >= 2, ErrorKind::invalid_argument, "grid needs at least 2 nodes per axis");
  require(x_max > x_min && y_max > y_min, ErrorKind::invalid_argument, "grid extent must be positive");
}

PointStencil bilinear_stencil(const Grid2D& grid, double x, double y) {
  if (!(grid.contains(x, y))) fail(ErrorKind::out_of_bounds, "interpolation point outside the grid");
  const double hx = grid.hx(), hy = grid.hy();
  const int i = std::clamp(static_cast<int>(std::floor((x - grid.x_min) / hx)), 0, grid.nx - 2);
  const int j = std::clamp(static_cast<int>(std::floor((y - grid.y_min) / hy)), 0, grid.ny - 2);
  const double tx = (x - grid.x(i)) / hx;
  const double ty = (y - grid.y(j)) / hy;
  PointStencil s;
  s.idx = {grid.index(i, j), grid.index(i + 1, j), grid.index(i, j + 1), grid.index(i + 1, j + 1)};
  s.w = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  s.wx = {-(1 - ty) / hx, (1 - ty) / hx, -ty / hx, ty / hx};
  s.wy = {-(1 - tx) / hy, -tx / hy, (1 - tx) / hy, tx / hy};
  return s;
}

void SourceParams::validate() const {
  require(theta_h > 0.0, ErrorKind::invalid_argument, "source width must be positive");
  require(std::isfinite(theta_x) && std::isfinite(theta_y) && std::isfinite(theta_s),
          ErrorKind::invalid_argument, "source parameters must be finite");
}

double gaussian_source(double zx, double zy, const SourceParams& p) {
  const double dx = p.theta_x - zx, dy = p.theta_y - zy;
  const double h2 = p.theta_h * p.theta_h;
  return p.theta_s / (2.0 * std::numbers::pi * h2) * std::exp(-(dx * dx + dy * dy) / (2.0 * h2));
}

double cauchy_source(double zx, double zy, const SourceParams& p) {
  const double dx = p.theta_x - zx, dy = p.theta_y - zy;
  const double h2 = p.theta_h * p.theta_h;
  return 3.0 * p.theta_s / (std::numbers::pi * ((dx * dx + dy * dy) / (2.0 * h2) + 2.0 * h2));
}

std::array<double, 4> gaussian_source_grad(double zx, double zy, const SourceParams& p) {
  const double dx = p.theta_x - zx, dy = p.theta_y - zy;
  const double h = p.theta_h, h2 = h * h, r2 = dx * dx + dy * dy;
  const double unit = std::exp(-r2 / (2.0 * h2)) / (2.0 * std::numbers::pi * h2);
  const double s = p.theta_s * unit;
  return {-s * dx / h2, -s * dy / h2, s * (r2 / (h2 * h) - 2.0 / h), unit};
}

std::array<double, 4> cauchy_source_grad(double zx, double zy, const SourceParams& p) {
  const double dx = p.theta_x - zx, dy = p.theta_y - zy;
  const double h = p.theta_h, h2 = h * h, r2 = dx * dx + dy * dy;
  const double den = r2 / (2.0 * h2) + 2.0 * h2;
  const double c = -3.0 * p.theta_s / (std::numbers::pi * den * den);
  return {c * dx / h2, c * dy / h2, c * (4.0 * h - r2 / (h2 * h)), 3.0 / (std::numbers::pi * den)};
}

std::size_t ScalarFieldSeries::snapshot_index(double t) const {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (std::abs(times[k] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return k;
  }
  fail(ErrorKind::missing_snapshot, "no snapshot stored at t=" + std::to_string(t));
}

FieldSolver::FieldSolver(Grid2D grid, VelocityLaw velocity, SolverOptions options)
    : grid_(grid), velocity_(velocity), options_(options) {
  grid_.validate();
  require(options_.cfl > 0.0 && options_.blowup > 0.0, ErrorKind::invalid_argument,
          "solver cfl factor and blow-up bound must be positive");
  const double hx = grid_.hx(), hy = grid_.hy();
  wx_.assign(grid_.nx, hx);
  wy_.assign(grid_.ny, hy);
  wx_.front() = wx_.back() = 0.5 * hx;
  wy_.front() = wy_.back() = 0.5 * hy;
  for (double w : wx_) inv_wx_.push_back(1.0 / w);
  for (double w : wy_) inv_wy_.push_back(1.0 / w);
}

double FieldSolver::total_mass(const Field& u) const {
  double m = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) m += volume(k) * u[k];
  return m;
}

double FieldSolver::stable_dt(double t_end) const {
  if (options_.dt > 0.0) return options_.dt;
  const double h = std::min(grid_.hx(), grid_.hy());
  const double vmax = std::sqrt(2.0) * std::abs(velocity_(t_end));
  double limit = h * h / 4.0;
  if (vmax > 0.0) limit = std::min(limit, h / vmax);
  return options_.cfl * limit;
}

TimeSchedule FieldSolver::schedule(std::span<const double> snapshot_times) const {
  require(!snapshot_times.empty(), ErrorKind::invalid_argument, "at least one snapshot time is required");
  TimeSchedule s;
  double prev = 0.0;
  for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
    const double t = snapshot_times[k];
    require(std::isfinite(t) && t >= 0.0, ErrorKind::invalid_argument, "snapshot times must be >= 0");
    require(k == 0 || t > snapshot_times[k - 1], ErrorKind::invalid_argument,
            "snapshot times must be strictly increasing");
    if (t > prev) {
      const double dt_max = stable_dt(snapshot_times.back());
      const auto n = static_cast<std::size_t>(std::ceil((t - prev) / dt_max - 1e-9));
      const double dt = (t - prev) / static_cast<double>(n);
      for (std::size_t m = 0; m < n; ++m) {
        s.step_time.push_back(prev + static_cast<double>(m) * dt);
        s.step_dt.push_back(dt);
      }
      prev = t;
    }
    s.snapshot_times.push_back(t);
    s.snapshot_step.push_back(s.step_dt.size());
  }
  return s;
}

void FieldSolver::apply(const Field& u, double t, Field& rate) const {
  const int nx = grid_.nx, ny = grid_.ny;
  const double v = velocity_(t);
  const double ax = 1.0 / grid_.hx() + std::max(v, 0.0), bx = -1.0 / grid_.hx() + std::min(v, 0.0);
  const double ay = 1.0 / grid_.hy() + std::max(v, 0.0), by = -1.0 / grid_.hy() + std::min(v, 0.0);
  rate.assign(u.size(), 0.0);
  for (int j = 0; j < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 0; i + 1 < nx; ++i) {
      const double f = ax * u[row + i] + bx * u[row + i + 1];
      rate[row + i] -= f * inv_wx_[i];
      rate[row + i + 1] += f * inv_wx_[i + 1];
    }
  }
  for (int j = 0; j + 1 < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    const double ia = inv_wy_[j], ib = inv_wy_[j + 1];
    for (int i = 0; i < nx; ++i) {
      const double f = ay * u[row + i] + by * u[row + nx + i];
      rate[row + i] -= f * ia;
      rate[row + nx + i] += f * ib;
    }
  }
}

void FieldSolver::apply_transpose(const Field& lambda, double t, Field& out) const {
  const int nx = grid_.nx, ny = grid_.ny;
  const double v = velocity_(t);
  const double ax = 1.0 / grid_.hx() + std::max(v, 0.0), bx = -1.0 / grid_.hx() + std::min(v, 0.0);
  const double ay = 1.0 / grid_.hy() + std::max(v, 0.0), by = -1.0 / grid_.hy() + std::min(v, 0.0);
  out.assign(lambda.size(), 0.0);
  for (int j = 0; j < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 0; i + 1 < nx; ++i) {
      const double g = lambda[row + i + 1] * inv_wx_[i + 1] - lambda[row + i] * inv_wx_[i];
      out[row + i] += ax * g;
      out[row + i + 1] += bx * g;
    }
  }
  for (int j = 0; j + 1 < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    const double ia = inv_wy_[j], ib = inv_wy_[j + 1];
    for (int i = 0; i < nx; ++i) {
      const double g = lambda[row + nx + i] * ib - lambda[row + i] * ia;
      out[row + i] += ay * g;
      out[row + nx + i] += by * g;
    }
  }
}

ScalarFieldSeries FieldSolver::solve(const Field& source, const TimeSchedule& schedule, std::size_t last) const {
  require(source.size() == grid_.size(), ErrorKind::invalid_argument, "source field size does not match grid");
  const std::size_t count = std::min(last, schedule.snapshot_times.size() - 1) + 1;
  ScalarFieldSeries out;
  out.grid = grid_;
  out.times.assign(schedule.snapshot_times.begin(), schedule.snapshot_times.begin() + static_cast<long>(count));
  out.values.reserve(count);
  Field u(grid_.size(), 0.0), rate(grid_.size(), 0.0);
  std::size_t step = 0;
  for (std::size_t k = 0; k < count; ++k) {
    for (; step < schedule.snapshot_step[k]; ++step) {
      const double dt = schedule.step_dt[step];
      apply(u, schedule.step_time[step], rate);
      double peak = 0.0;
      for (std::size_t n = 0; n < u.size(); ++n) {
        u[n] += dt * (rate[n] + source[n]);
        peak = std::max(peak, std::abs(u[n]));
      }
      if (!(peak <= options_.blowup)) {
        fail(ErrorKind::instability, "field exceeded the blow-up bound at t=" +
                                         std::to_string(schedule.step_time[step] + dt));
      }
    }
    out.values.push_back(u);
  }
  return out;
}

Field FieldSolver::adjoint_kernel(std::span<const std::size_t> nodes, std::span<const double> weights,
                                  const TimeSchedule& schedule, std::size_t snapshot) const {
  if (snapshot >= schedule.snapshot_step.size() || schedule.snapshot_step[snapshot] > schedule.steps()) {
    fail(ErrorKind::missing_checkpoint, "adjoint requested for a snapshot outside the stored schedule");
  }
  require(nodes.size() == weights.size(), ErrorKind::invalid_argument, "adjoint weights size mismatch");
  Field lambda(grid_.size(), 0.0), next(grid_.size(), 0.0), kernel(grid_.size(), 0.0);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    require(nodes[k] < grid_.size(), ErrorKind::out_of_bounds, "adjoint node outside the grid");
    lambda[nodes[k]] += weights[k];
  }
  for (std::size_t n = schedule.snapshot_step[snapshot]; n-- > 0;) {
    const double dt = schedule.step_dt[n];
    apply_transpose(lambda, schedule.step_time[n], next);
    for (std::size_t m = 0; m < lambda.size(); ++m) {
      kernel[m] += dt * lambda[m];
      lambda[m] += dt * next[m];
    }
  }
  return kernel;
}

double dot(const Field& a, const Field& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

std::vector<double> adjoint_point_sensitivity(const FieldSolver& solver, const TimeSchedule& schedule,
                                              std::size_t snapshot, double x, double y,
                                              std::span<const Field> source_jacobian) {
  const Field kernel = solver.adjoint_kernel(bilinear_stencil(solver.grid(), x, y), schedule, snapshot);
  std::vector<double> grad;
  grad.reserve(source_jacobian.size());
  for (const Field& ds : source_jacobian) {
    require(ds.size() == kernel.size(), ErrorKind::invalid_argument, "source jacobian size mismatch");
    grad.push_back(dot(kernel, ds));
  }
  return grad;
}

}  // namespace adeki
