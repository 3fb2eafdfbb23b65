#pragma once

#include "adeki/field_solver.hpp"
#include "adeki/random.hpp"

namespace adeki {

/// Measurement coordinate. Only (x, y) are optimized; t is fixed per stage.
struct Design {
  double x = 0.5;
  double y = 0.5;
  double t = 0.0;
};

struct Measurement {
  Design design;
  double value = 0.0;
  double noise_var = 0.0;
};

struct Interpolated {
  double value = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

Interpolated interpolate_with_grad(const Grid2D& grid, const Field& field, double x, double y);

/// Truth snapshot at d.t interpolated at (d.x, d.y) plus one N(0, noise_var) draw.
Measurement measure_truth(const ScalarFieldSeries& truth, const Design& d, double noise_var, Rng& rng);

/// Clips a proposal to the step box around `prev`, then to [lo, hi]^2.
Design project_design(const Design& proposal, const Design& prev, double step_box, double lo = 0.0,
                      double hi = 1.0);

/// Moves a coordinate that sits within `eps` of a grid line by `eps` towards
/// the cell interior, where the bilinear interpolant is differentiable. The
/// nudge goes downwards when moving up would leave [.., hi].
Design nudge_off_grid(const Grid2D& grid, const Design& d, double hi = 1.0, double eps = 1e-9);

}  // namespace adeki
