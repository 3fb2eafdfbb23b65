#include <cmath>
#include <numbers>
#include <vector>

#include "adeki/error.hpp"
#include "adeki/field_solver.hpp"
#include "adeki/observe.hpp"
#include "doctest.h"

using namespace adeki;

namespace {

constexpr double kPi = std::numbers::pi;

Field gaussian_field(const Grid2D& g, const SourceParams& p, int quad = 3) {
  Field out;
  discretize_source(g, [&](double x, double y) { return gaussian_source(x, y, p); }, quad, out);
  return out;
}

double max_rel_diff(const Field& a, const Field& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num = std::max(num, std::abs(a[k] - b[k]));
    den = std::max(den, std::abs(b[k]));
  }
  return den > 0 ? num / den : num;
}

}  // namespace

TEST_SUITE("field_solver") {
  TEST_CASE("gaussian source formula") {
    const SourceParams centre{0.3, 0.7, 2.0, 0.05};
    CHECK(gaussian_source(0.3, 0.7, centre) == doctest::Approx(0.05 / (2 * kPi * 4)).epsilon(1e-14));
    CHECK(0.05 / (2 * kPi * 4) == doctest::Approx(1.9894e-3).epsilon(1e-4));
    const SourceParams zero{0.3, 0.7, 0.05, 0.0};
    CHECK(gaussian_source(0.1, 0.9, zero) == 0.0);

    const SourceParams p{0.25, 0.25, 2.0, 0.05};
    const double ref = 0.05 / (2 * kPi * 4.0) * std::exp(-1.0 / 8.0);
    CHECK(gaussian_source(1.25, 0.25, p) == doctest::Approx(ref).epsilon(1e-14));
  }

  TEST_CASE("cauchy source formula") {
    const SourceParams p{0.25, 0.25, 0.05, 2.0};
    CHECK(cauchy_source(0.25, 0.25, p) == doctest::Approx(6.0 / (kPi * 0.005)).epsilon(1e-14));
    CHECK(cauchy_source(0.25, 0.25, p) == doctest::Approx(381.97).epsilon(1e-4));
    const SourceParams zero{0.25, 0.25, 0.05, 0.0};
    CHECK(cauchy_source(0.6, 0.1, zero) == 0.0);
    const double r2 = 0.0625 + 0.0625;
    CHECK(cauchy_source(0.5, 0.5, p) == doctest::Approx(6.0 / (kPi * (r2 / 0.005 + 0.005))).epsilon(1e-14));
  }

  TEST_CASE("source parameter gradients match finite differences") {
    const SourceParams p{0.4, 0.3, 0.07, 1.7};
    const double zx = 0.45, zy = 0.22, h = 1e-6;
    for (int fam = 0; fam < 2; ++fam) {
      const auto f = [&](const SourceParams& q) {
        return fam == 0 ? gaussian_source(zx, zy, q) : cauchy_source(zx, zy, q);
      };
      const auto g = fam == 0 ? gaussian_source_grad(zx, zy, p) : cauchy_source_grad(zx, zy, p);
      for (int k = 0; k < 4; ++k) {
        SourceParams a = p, b = p;
        double* pa = k == 0 ? &a.theta_x : k == 1 ? &a.theta_y : k == 2 ? &a.theta_h : &a.theta_s;
        double* pb = k == 0 ? &b.theta_x : k == 1 ? &b.theta_y : k == 2 ? &b.theta_h : &b.theta_s;
        *pa += h;
        *pb -= h;
        const double fd = (f(a) - f(b)) / (2 * h);
        CHECK(g[k] == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("zero source gives a zero solution") {
    const FieldSolver solver(Grid2D::square(-2, 3, 21), VelocityLaw{50.0});
    const Field zero(solver.grid().size(), 0.0);
    const std::vector<double> times{0.0, 0.01, 0.03};
    const ScalarFieldSeries s = solver.solve(zero, times);
    REQUIRE(s.values.size() == 3);
    for (const Field& f : s.values)
      for (double v : f) CHECK(v == 0.0);
  }

  TEST_CASE("initial snapshot is zero") {
    const FieldSolver solver(Grid2D::square(-2, 3, 21), VelocityLaw{20.0});
    const Field src = gaussian_field(solver.grid(), {0.5, 0.5, 0.3, 2.0});
    const std::vector<double> times{0.0, 0.02};
    const ScalarFieldSeries s = solver.solve(src, times);
    for (double v : s.values[0]) CHECK(v == 0.0);
  }

  TEST_CASE("mass balance without advection") {
    const FieldSolver solver(Grid2D::square(-2, 3, 31), VelocityLaw{0.0});
    const Field src = gaussian_field(solver.grid(), {0.5, 0.5, 0.3, 2.0});
    const double injected = solver.total_mass(src);
    const std::vector<double> times{0.01, 0.04, 0.1};
    const ScalarFieldSeries s = solver.solve(src, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double m = solver.total_mass(s.values[k]);
      CHECK(std::abs(m - times[k] * injected) <= 1e-6 * times[k] * injected);
    }
  }

  TEST_CASE("solution is linear in the strength") {
    const FieldSolver solver(Grid2D::square(-2, 3, 41), VelocityLaw{50.0});
    const std::vector<double> times{0.02, 0.05};
    const ScalarFieldSeries a = solver.solve(gaussian_field(solver.grid(), {0.4, 0.3, 0.1, 1.3}), times);
    const ScalarFieldSeries b = solver.solve(gaussian_field(solver.grid(), {0.4, 0.3, 0.1, 2.6}), times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      Field twice = a.values[k];
      for (double& v : twice) v *= 2.0;
      CHECK(max_rel_diff(b.values[k], twice) < 1e-12);
    }
  }

  TEST_CASE("plume mass grows and drifts towards +x,+y") {
    const FieldSolver solver(Grid2D::square(-2, 3, 101), VelocityLaw{50.0});
    const SourceParams p{0.25, 0.25, 0.05, 2.0};
    const std::vector<double> times{0.03, 0.06, 0.09, 0.12, 0.15};
    const ScalarFieldSeries s = solver.solve(gaussian_field(solver.grid(), p), times);
    double prev_mass = 0.0, prev_cx = p.theta_x, prev_cy = p.theta_y;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const Field& u = s.values[k];
      double mass = 0.0, cx = 0.0, cy = 0.0;
      for (int j = 0; j < solver.grid().ny; ++j)
        for (int i = 0; i < solver.grid().nx; ++i) {
          const double v = u[solver.grid().index(i, j)];
          mass += v;
          cx += v * solver.grid().x(i);
          cy += v * solver.grid().y(j);
        }
      cx /= mass;
      cy /= mass;
      CHECK(mass > prev_mass);
      CHECK(cx > prev_cx);
      CHECK(cy > prev_cy);
      prev_mass = mass;
      prev_cx = cx;
      prev_cy = cy;
    }
  }

  TEST_CASE("oversized time step is detected as instability") {
    SolverOptions o;
    o.dt = 0.05;
    const FieldSolver solver(Grid2D::square(-2, 3, 41), VelocityLaw{50.0}, o);
    const Field src = gaussian_field(solver.grid(), {0.5, 0.5, 0.1, 2.0});
    const std::vector<double> times{2.0};
    try {
      (void)solver.solve(src, times);
      FAIL("expected an instability error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::instability);
    }
  }

  TEST_CASE("schedule validation") {
    const FieldSolver solver(Grid2D::square(-2, 3, 21), VelocityLaw{20.0});
    const std::vector<double> bad{0.03, 0.02};
    CHECK_THROWS_AS(solver.schedule(bad), Error);
    const std::vector<double> ok{0.01, 0.03};
    const TimeSchedule s = solver.schedule(ok);
    double t = 0.0;
    for (std::size_t k = 0; k < s.snapshot_step[1]; ++k) t += s.step_dt[k];
    CHECK(t == doctest::Approx(0.03).epsilon(1e-13));
  }

  TEST_CASE("adjoint kernel reproduces point values") {
    const FieldSolver solver(Grid2D::square(-2, 3, 21), VelocityLaw{50.0});
    const std::vector<double> times{0.02, 0.04};
    const TimeSchedule sched = solver.schedule(times);
    const Field src = gaussian_field(solver.grid(), {0.4, 0.35, 0.3, 2.0});
    const ScalarFieldSeries s = solver.solve(src, sched);
    const PointStencil st = bilinear_stencil(solver.grid(), 0.61, 0.43);
    for (std::size_t snap = 0; snap < 2; ++snap) {
      const Field kernel = solver.adjoint_kernel(st, sched, snap);
      double direct = 0.0;
      for (int c = 0; c < 4; ++c) direct += st.w[c] * s.values[snap][st.idx[c]];
      CHECK(dot(kernel, src) == doctest::Approx(direct).epsilon(1e-12));
    }
  }

  TEST_CASE("adjoint point sensitivity matches finite differences") {
    const FieldSolver solver(Grid2D::square(-2, 3, 11), VelocityLaw{20.0});
    const std::vector<double> times{0.05, 0.1};
    const TimeSchedule sched = solver.schedule(times);
    const SourceParams p{0.45, 0.25, 0.6, 2.0};
    const double ox = 0.7, oy = 0.4;

    std::vector<Field> jac(4);
    for (int k = 0; k < 4; ++k)
      discretize_source(
          solver.grid(), [&](double x, double y) { return gaussian_source_grad(x, y, p)[k]; }, 3, jac[k]);
    const std::vector<double> g = adjoint_point_sensitivity(solver, sched, 1, ox, oy, jac);

    const auto observe = [&](const SourceParams& q) {
      const ScalarFieldSeries s = solver.solve(gaussian_field(solver.grid(), q), sched);
      return interpolate_with_grad(solver.grid(), s.values[1], ox, oy).value;
    };
    const double h = 1e-4;
    for (int k = 0; k < 4; ++k) {
      SourceParams a = p, b = p;
      double* pa = k == 0 ? &a.theta_x : k == 1 ? &a.theta_y : k == 2 ? &a.theta_h : &a.theta_s;
      double* pb = k == 0 ? &b.theta_x : k == 1 ? &b.theta_y : k == 2 ? &b.theta_h : &b.theta_s;
      *pa += h;
      *pb -= h;
      const double fd = (observe(a) - observe(b)) / (2 * h);
      CHECK(std::abs(g[k] - fd) <= 1e-6 * std::max(std::abs(fd), 1e-12));
    }
  }

  TEST_CASE("strength sensitivity equals the unit-strength observation") {
    const FieldSolver solver(Grid2D::square(-2, 3, 21), VelocityLaw{20.0});
    const std::vector<double> times{0.04};
    const TimeSchedule sched = solver.schedule(times);
    const SourceParams p{0.45, 0.25, 0.2, 3.0};
    std::vector<Field> jac(4);
    for (int k = 0; k < 4; ++k)
      discretize_source(
          solver.grid(), [&](double x, double y) { return gaussian_source_grad(x, y, p)[k]; }, 3, jac[k]);
    // the field does not depend on theta_h through a zero jacobian
    jac[2].assign(jac[2].size(), 0.0);
    const std::vector<double> g = adjoint_point_sensitivity(solver, sched, 0, 0.5, 0.3, jac);
    SourceParams unit = p;
    unit.theta_s = 1.0;
    const ScalarFieldSeries s = solver.solve(gaussian_field(solver.grid(), unit), sched);
    CHECK(g[3] == doctest::Approx(interpolate_with_grad(solver.grid(), s.values[0], 0.5, 0.3).value).epsilon(1e-12));
    CHECK(g[2] == 0.0);
  }

  TEST_CASE("missing snapshot") {
    const FieldSolver solver(Grid2D::square(-2, 3, 11), VelocityLaw{20.0});
    const std::vector<double> times{0.01};
    const ScalarFieldSeries s = solver.solve(Field(solver.grid().size(), 0.0), times);
    CHECK_THROWS_AS(s.snapshot_index(0.02), Error);
  }
}
