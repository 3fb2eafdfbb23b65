#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "adeki/memory.hpp"

namespace adeki {

using Field = TrackedBuffer;

struct Grid2D {
  double x_min = -2.0;
  double x_max = 3.0;
  double y_min = -2.0;
  double y_max = 3.0;
  int nx = 101;
  int ny = 101;

  static Grid2D square(double lo, double hi, int n) { return {lo, hi, lo, hi, n, n}; }

  double hx() const noexcept { return (x_max - x_min) / (nx - 1); }
  double hy() const noexcept { return (y_max - y_min) / (ny - 1); }
  double x(int i) const noexcept { return x_min + i * hx(); }
  double y(int j) const noexcept { return y_min + j * hy(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int i, int j) const noexcept { return static_cast<std::size_t>(j) * nx + i; }
  bool contains(double px, double py) const noexcept {
    return px >= x_min && px <= x_max && py >= y_min && py <= y_max;
  }
  void validate() const;
};

/// Bilinear interpolation stencil: value = sum w[k] * u[idx[k]], and the
/// gradient of the interpolant uses wx / wy with the same nodes.
struct PointStencil {
  std::array<std::size_t, 4> idx{};
  std::array<double, 4> w{};
  std::array<double, 4> wx{};
  std::array<double, 4> wy{};
};

PointStencil bilinear_stencil(const Grid2D& grid, double x, double y);

struct VelocityLaw {
  double c = 0.0;
  double operator()(double t) const noexcept { return c * t; }
};

struct SourceParams {
  double theta_x = 0.0;
  double theta_y = 0.0;
  double theta_h = 0.05;
  double theta_s = 1.0;
  void validate() const;
};

double gaussian_source(double zx, double zy, const SourceParams& p);
double cauchy_source(double zx, double zy, const SourceParams& p);

/// Partial derivatives with respect to (theta_x, theta_y, theta_h, theta_s).
std::array<double, 4> gaussian_source_grad(double zx, double zy, const SourceParams& p);
std::array<double, 4> cauchy_source_grad(double zx, double zy, const SourceParams& p);

/// Control-volume average of f over a q x q midpoint sub-sample per node.
template <class F>
void discretize_source(const Grid2D& grid, F&& f, int quad, Field& out) {
  out.assign(grid.size(), 0.0);
  const double hx = grid.hx(), hy = grid.hy();
  const double inv = 1.0 / (static_cast<double>(quad) * quad);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      double acc = 0.0;
      for (int b = 0; b < quad; ++b) {
        const double py = grid.y(j) + ((b + 0.5) / quad - 0.5) * hy;
        for (int a = 0; a < quad; ++a) acc += f(grid.x(i) + ((a + 0.5) / quad - 0.5) * hx, py);
      }
      out[grid.index(i, j)] = acc * inv;
    }
  }
}

struct SolverOptions {
  double cfl = 0.4;
  double dt = 0.0;  // > 0 overrides the automatic step
  double blowup = 1e6;
};

/// Explicit time steps that land exactly on each snapshot time.
struct TimeSchedule {
  std::vector<double> snapshot_times;
  std::vector<std::size_t> snapshot_step;  // steps completed at each snapshot
  std::vector<double> step_time;           // time at the start of each step
  std::vector<double> step_dt;

  std::size_t steps() const noexcept { return step_dt.size(); }
};

struct ScalarFieldSeries {
  Grid2D grid;
  std::vector<double> times;
  std::vector<Field> values;

  std::size_t snapshot_index(double t) const;
  const Field& at(double t) const { return values[snapshot_index(t)]; }
};

/// Node-centred finite-volume scheme on a rectangle with homogeneous Neumann
/// walls: central diffusive fluxes, upwind advective fluxes, explicit Euler.
class FieldSolver {
 public:
  FieldSolver(Grid2D grid, VelocityLaw velocity, SolverOptions options = {});

  const Grid2D& grid() const noexcept { return grid_; }
  const VelocityLaw& velocity() const noexcept { return velocity_; }
  const SolverOptions& options() const noexcept { return options_; }
  double volume(std::size_t k) const noexcept {
    return wx_[k % grid_.nx] * wy_[k / grid_.nx];
  }
  double total_mass(const Field& u) const;

  double stable_dt(double t_end) const;
  TimeSchedule schedule(std::span<const double> snapshot_times) const;

  /// Runs up to and including snapshot `last` (all snapshots by default).
  ScalarFieldSeries solve(const Field& source, const TimeSchedule& schedule,
                          std::size_t last = static_cast<std::size_t>(-1)) const;
  ScalarFieldSeries solve(const Field& source, std::span<const double> snapshot_times) const {
    return solve(source, schedule(snapshot_times));
  }

  /// Kernel L such that sum_k weights[k] * u(t_snapshot)[k] == dot(L, s) for
  /// every time-independent source s.
  Field adjoint_kernel(std::span<const std::size_t> nodes, std::span<const double> weights,
                       const TimeSchedule& schedule, std::size_t snapshot) const;
  Field adjoint_kernel(const PointStencil& stencil, const TimeSchedule& schedule, std::size_t snapshot) const {
    return adjoint_kernel(stencil.idx, stencil.w, schedule, snapshot);
  }

  /// rate = L(t) u, the spatial operator without the source.
  void apply(const Field& u, double t, Field& rate) const;
  void apply_transpose(const Field& lambda, double t, Field& out) const;

 private:
  Grid2D grid_;
  VelocityLaw velocity_;
  SolverOptions options_;
  std::vector<double> wx_, wy_, inv_wx_, inv_wy_;
};

/// Derivatives of the interpolated snapshot value at (x, y) with respect to
/// each source parameter, given the per-parameter source derivative fields.
std::vector<double> adjoint_point_sensitivity(const FieldSolver& solver, const TimeSchedule& schedule,
                                              std::size_t snapshot, double x, double y,
                                              std::span<const Field> source_jacobian);

double dot(const Field& a, const Field& b);

}  // namespace adeki
