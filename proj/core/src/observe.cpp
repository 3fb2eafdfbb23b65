#include "adeki/observe.hpp"

#include <algorithm>
#include <cmath>

#include "adeki/error.hpp"

namespace adeki {

Interpolated interpolate_with_grad(const Grid2D& grid, const Field& field, double x, double y) {
  require(field.size() == grid.size(), ErrorKind::invalid_argument, "field size does not match grid");
  const PointStencil s = bilinear_stencil(grid, x, y);
  Interpolated out;
  for (int k = 0; k < 4; ++k) {
    const double u = field[s.idx[k]];
    out.value += s.w[k] * u;
    out.dx += s.wx[k] * u;
    out.dy += s.wy[k] * u;
  }
  return out;
}

Measurement measure_truth(const ScalarFieldSeries& truth, const Design& d, double noise_var, Rng& rng) {
  require(noise_var >= 0.0, ErrorKind::invalid_argument, "noise variance must be non-negative");
  const Field& snap = truth.at(d.t);
  const double clean = interpolate_with_grad(truth.grid, snap, d.x, d.y).value;
  const double eta = rng.normal();
  return {d, clean + std::sqrt(noise_var) * eta, noise_var};
}

Design project_design(const Design& proposal, const Design& prev, double step_box, double lo, double hi) {
  Design out = proposal;
  out.x = std::clamp(std::clamp(proposal.x, prev.x - step_box, prev.x + step_box), lo, hi);
  out.y = std::clamp(std::clamp(proposal.y, prev.y - step_box, prev.y + step_box), lo, hi);
  return out;
}

namespace {
double nudge(double v, double origin, double h, double hi, double eps) {
  const double s = (v - origin) / h;
  const double r = std::round(s);
  if (std::abs(s - r) * h >= eps) return v;
  const double up = origin + r * h + eps;
  return up <= hi ? up : origin + r * h - eps;
}
}  // namespace

Design nudge_off_grid(const Grid2D& grid, const Design& d, double hi, double eps) {
  Design out = d;
  out.x = nudge(d.x, grid.x_min, grid.hx(), std::min(hi, grid.x_max), eps);
  out.y = nudge(d.y, grid.y_min, grid.hy(), std::min(hi, grid.y_max), eps);
  return out;
}

}  // namespace adeki
