#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "adeki/error.hpp"
#include "adeki/forward_model.hpp"
#include "adeki/observe.hpp"
#include "doctest.h"

using namespace adeki;

namespace {

Field random_field(const Grid2D& g, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  Field f(g.size());
  for (double& v : f) v = ud(gen);
  return f;
}

struct Setup {
  std::shared_ptr<const FieldSolver> solver;
  std::shared_ptr<const TimeSchedule> schedule;
};

Setup coarse_setup(int n = 21) {
  auto solver = std::make_shared<FieldSolver>(Grid2D::square(-2, 3, n), VelocityLaw{20.0});
  const std::vector<double> times{0.03, 0.04};
  auto schedule = std::make_shared<TimeSchedule>(solver->schedule(times));
  return {solver, schedule};
}

}  // namespace

TEST_SUITE("observe") {
  TEST_CASE("interpolation reproduces nodal values") {
    const Grid2D g = Grid2D::square(-2, 3, 21);
    const Field f = random_field(g, 1);
    for (int i : {0, 7, 13, 20})
      for (int j : {0, 5, 20}) {
        CHECK(interpolate_with_grad(g, f, g.x(i), g.y(j)).value ==
              doctest::Approx(f[g.index(i, j)]).epsilon(1e-14));
      }
  }

  TEST_CASE("constant field") {
    const Grid2D g = Grid2D::square(-2, 3, 11);
    const Field f(g.size(), 4.25);
    const Interpolated v = interpolate_with_grad(g, f, 0.33, 0.71);
    CHECK(v.value == doctest::Approx(4.25));
    CHECK(std::abs(v.dx) < 1e-12);
    CHECK(std::abs(v.dy) < 1e-12);
  }

  TEST_CASE("bilinear formula oracle") {
    const Grid2D g = Grid2D::square(-2, 3, 21);
    const Field f = random_field(g, 2);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> ud(-1.9, 2.9);
    for (int rep = 0; rep < 50; ++rep) {
      const double x = ud(gen), y = ud(gen);
      const int i = static_cast<int>(std::floor((x - g.x_min) / g.hx()));
      const int j = static_cast<int>(std::floor((y - g.y_min) / g.hy()));
      const double tx = (x - g.x(i)) / g.hx(), ty = (y - g.y(j)) / g.hy();
      const double f00 = f[g.index(i, j)], f10 = f[g.index(i + 1, j)];
      const double f01 = f[g.index(i, j + 1)], f11 = f[g.index(i + 1, j + 1)];
      const double ref = (1 - tx) * (1 - ty) * f00 + tx * (1 - ty) * f10 + (1 - tx) * ty * f01 + tx * ty * f11;
      const double ref_dx = ((1 - ty) * (f10 - f00) + ty * (f11 - f01)) / g.hx();
      const Interpolated v = interpolate_with_grad(g, f, x, y);
      CHECK(std::abs(v.value - ref) < 1e-14);
      CHECK(std::abs(v.dx - ref_dx) < 1e-12);
    }
  }

  TEST_CASE("interpolation gradient matches finite differences inside a cell") {
    const Grid2D g = Grid2D::square(-2, 3, 21);
    const Field f = random_field(g, 4);
    const double x = 0.37, y = 0.61, h = 1e-6;
    const Interpolated v = interpolate_with_grad(g, f, x, y);
    const double fdx = (interpolate_with_grad(g, f, x + h, y).value - interpolate_with_grad(g, f, x - h, y).value) / (2 * h);
    const double fdy = (interpolate_with_grad(g, f, x, y + h).value - interpolate_with_grad(g, f, x, y - h).value) / (2 * h);
    CHECK(std::abs(v.dx - fdx) <= 1e-8 * std::abs(fdx));
    CHECK(std::abs(v.dy - fdy) <= 1e-8 * std::abs(fdy));
  }

  TEST_CASE("points outside the grid are rejected") {
    const Grid2D g = Grid2D::square(-2, 3, 11);
    const Field f(g.size(), 1.0);
    try {
      (void)interpolate_with_grad(g, f, 3.5, 0.0);
      FAIL("expected out-of-bounds");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::out_of_bounds);
    }
  }

  TEST_CASE("truth measurements") {
    const Setup s = coarse_setup();
    const ScalarFieldSeries truth =
        truth_series(*s.solver, *s.schedule, SourceFamily::gaussian, {0.45, 0.25, 0.2, 2.0}, 3);
    const Design d{0.5, 0.3, 0.04};
    const double clean = interpolate_with_grad(truth.grid, truth.at(0.04), d.x, d.y).value;

    Rng r0(5);
    CHECK(measure_truth(truth, d, 0.0, r0).value == clean);

    Rng a(9), b(9);
    CHECK(measure_truth(truth, d, 0.01, a).value == measure_truth(truth, d, 0.01, b).value);

    Rng rng(10);
    const double var = 0.0025;
    double m = 0.0, m2 = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
      const double r = measure_truth(truth, d, var, rng).value - clean;
      m += r;
      m2 += r * r;
    }
    m /= n;
    const double emp = m2 / n - m * m;
    CHECK(std::abs(emp - var) < 0.05 * var);

    try {
      (void)measure_truth(truth, Design{0.5, 0.3, 0.05}, var, rng);
      FAIL("expected missing snapshot");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::missing_snapshot);
    }
  }

  TEST_CASE("projection into the step box is idempotent") {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> ud(-0.5, 1.5);
    for (int rep = 0; rep < 200; ++rep) {
      const Design prev{std::clamp(ud(gen), 0.0, 1.0), std::clamp(ud(gen), 0.0, 1.0), 0.0};
      const Design p = project_design({ud(gen), ud(gen), 0.0}, prev, 0.2);
      CHECK(std::abs(p.x - prev.x) <= 0.2 + 1e-15);
      CHECK(std::abs(p.y - prev.y) <= 0.2 + 1e-15);
      CHECK(p.x >= 0.0);
      CHECK(p.x <= 1.0);
      const Design q = project_design(p, prev, 0.2);
      CHECK(q.x == p.x);
      CHECK(q.y == p.y);
    }
  }

  TEST_CASE("nudging moves designs off grid lines") {
    const Grid2D g = Grid2D::square(-2, 3, 51);
    const Design on{0.5, 1.0, 0.0};
    const Design n = nudge_off_grid(g, on);
    CHECK(n.x > 0.5);
    CHECK(n.y < 1.0);
    const Design inside{0.53, 0.27, 0.0};
    const Design m = nudge_off_grid(g, inside);
    CHECK(m.x == inside.x);
    CHECK(m.y == inside.y);
  }

  TEST_CASE("forward map with zero strength is zero") {
    const Setup s = coarse_setup();
    ModelSpec spec;
    spec.theta_h = 0.2;
    const SourceDesignModel model(make_stage(s.solver, s.schedule, 0.04), spec, 0.45, 0.25,
                                  ForwardStrategy::direct);
    const auto map = model.bind({0.52, 0.31, 0.04});
    const MapEval e = map->evaluate(Eigen::VectorXd::Zero(1), false);
    CHECK(e.g[0] == 0.0);
  }

  TEST_CASE("forward map at the truth parameters matches the truth field") {
    const Setup s = coarse_setup();
    const SourceParams p{0.45, 0.25, 0.2, 2.0};
    const ScalarFieldSeries truth = truth_series(*s.solver, *s.schedule, SourceFamily::gaussian, p, 5);
    ModelSpec spec;
    spec.theta_h = p.theta_h;
    const SourceDesignModel model(make_stage(s.solver, s.schedule, 0.04), spec, p.theta_x, p.theta_y,
                                  ForwardStrategy::direct);
    const Grid2D& g = s.solver->grid();
    const int i = 10, j = 9;  // node (0.5, 0.25)
    const auto map = model.bind({g.x(i), g.y(j), 0.04});
    const double value = map->evaluate(Eigen::VectorXd::Constant(1, p.theta_s), false).g[0];
    CHECK(value == doctest::Approx(truth.at(0.04)[g.index(i, j)]).epsilon(1e-13));
  }

  TEST_CASE("forward map is linear in the strength and strategies agree") {
    const Setup s = coarse_setup();
    ModelSpec spec;
    spec.theta_h = 0.2;
    const StageSetup stage = make_stage(s.solver, s.schedule, 0.03);
    const Design d{0.57, 0.33, 0.03};
    const Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 1.3), two = Eigen::VectorXd::Constant(1, 2.6);
    std::vector<double> values;
    for (ForwardStrategy st : {ForwardStrategy::direct, ForwardStrategy::green, ForwardStrategy::scaled}) {
      const SourceDesignModel model(stage, spec, 0.45, 0.25, st);
      const auto map = model.bind(d);
      const double a = map->evaluate(one, false).g[0], b = map->evaluate(two, false).g[0];
      CHECK(std::abs(b - 2 * a) <= 1e-12 * std::abs(b));
      values.push_back(a);
    }
    CHECK(values[1] == doctest::Approx(values[0]).epsilon(1e-12));
    CHECK(values[2] == doctest::Approx(values[0]).epsilon(1e-12));
  }

  TEST_CASE("stage times must be in the schedule") {
    const Setup s = coarse_setup();
    try {
      (void)make_stage(s.solver, s.schedule, 0.035);
      FAIL("expected missing snapshot");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::missing_snapshot);
    }
  }
}
