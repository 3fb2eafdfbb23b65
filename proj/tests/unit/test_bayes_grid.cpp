#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "adeki/bayes_grid.hpp"
#include "adeki/error.hpp"
#include "adeki/metrics.hpp"
#include "doctest.h"

using namespace adeki;

namespace {

double total(const GridPosterior& p) { return std::accumulate(p.probs().begin(), p.probs().end(), 0.0); }

std::vector<double> random_positive(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ud(0.05, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = ud(gen);
  return v;
}

struct Stage {
  std::shared_ptr<const FieldSolver> solver;
  std::shared_ptr<const TimeSchedule> schedule;
  StageSetup stage;
};

Stage small_stage() {
  Stage s;
  auto solver = std::make_shared<FieldSolver>(Grid2D::square(-2, 3, 21), VelocityLaw{20.0});
  s.schedule = std::make_shared<TimeSchedule>(solver->schedule(std::vector<double>{0.03, 0.04}));
  s.solver = solver;
  s.stage = make_stage(s.solver, s.schedule, 0.04);
  return s;
}

}  // namespace

TEST_SUITE("bayes_grid") {
  TEST_CASE("priors are normalized") {
    const GridPosterior u(11);
    CHECK(u.size() == 121);
    CHECK(total(u) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(u[5] == doctest::Approx(1.0 / 121));
    const GridPosterior g = GridPosterior::gaussian(21, 0.3, 0.6, 0.1);
    CHECK(total(g) == doctest::Approx(1.0).epsilon(1e-14));
    const PhysMap m = map_estimate(g);
    CHECK(m.x == doctest::Approx(0.3));
    CHECK(m.y == doctest::Approx(0.6));
    CHECK(u.x(12) == doctest::Approx(0.1));
    CHECK(u.y(12) == doctest::Approx(0.1));
  }

  TEST_CASE("posterior update is Bayes' rule") {
    const int n = 9;
    const std::vector<double> prior_w = random_positive(n * n, 1);
    const GridPosterior prior(n, prior_w);
    const std::vector<double> lik = random_positive(n * n, 2);
    const GridPosterior post = posterior_update(prior, lik);
    double z = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) z += prior[k] * lik[k];
    for (std::size_t k = 0; k < prior.size(); ++k) CHECK(post[k] == doctest::Approx(prior[k] * lik[k] / z).epsilon(1e-12));

    std::vector<double> loglik(lik.size());
    for (std::size_t k = 0; k < lik.size(); ++k) loglik[k] = std::log(lik[k]);
    const GridPosterior post_log = posterior_update_log(prior, loglik);
    for (std::size_t k = 0; k < prior.size(); ++k) CHECK(post_log[k] == doctest::Approx(post[k]).epsilon(1e-12));

    const std::vector<double> flat(lik.size(), 0.37);
    const GridPosterior same = posterior_update(prior, flat);
    for (std::size_t k = 0; k < prior.size(); ++k) CHECK(same[k] == doctest::Approx(prior[k]).epsilon(1e-12));
  }

  TEST_CASE("sequential updates commute") {
    const int n = 7;
    const GridPosterior prior(n);
    const std::vector<double> a = random_positive(n * n, 3), b = random_positive(n * n, 4);
    const GridPosterior ab = posterior_update(posterior_update(prior, a), b);
    const GridPosterior ba = posterior_update(posterior_update(prior, b), a);
    for (std::size_t k = 0; k < prior.size(); ++k) CHECK(ab[k] == doctest::Approx(ba[k]).epsilon(1e-12));
  }

  TEST_CASE("log likelihood is the Gaussian density") {
    const std::vector<double> pred{0.1, 0.5, -0.2};
    const std::vector<double> ll = log_likelihood_grid(0.3, pred, 0.04);
    const std::vector<double> l = likelihood_grid(0.3, pred, 0.04);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      CHECK(ll[k] == doctest::Approx(gaussian_logpdf(0.3, pred[k], 0.04)).epsilon(1e-13));
      CHECK(l[k] == doctest::Approx(std::exp(ll[k])).epsilon(1e-13));
    }
    const GridPosterior prior(3, random_positive(9, 8));
    const std::vector<double> wide = likelihood_grid(0.3, std::vector<double>{0.1, 0.5, -0.2, 0, 0, 0, 1, 2, 3}, 1e12);
    const GridPosterior post = posterior_update(prior, wide);
    for (std::size_t k = 0; k < 9; ++k) CHECK(post[k] == doctest::Approx(prior[k]).epsilon(1e-9));
  }

  TEST_CASE("zero-mass nodes stay at zero") {
    std::vector<double> w(9, 0.0);
    w[4] = 1.0;
    w[5] = 3.0;
    const GridPosterior p(3, w);
    const GridPosterior q = posterior_update(p, random_positive(9, 5));
    CHECK(q[0] == 0.0);
    CHECK(total(q) == doctest::Approx(1.0));
  }

  TEST_CASE("KL utility") {
    const GridPosterior prior(5);
    CHECK(kl_utility(prior, prior) == doctest::Approx(0.0).epsilon(1e-14));
    std::vector<double> w(25, 0.0);
    w[12] = 1.0;
    const GridPosterior point(5, w);
    CHECK(kl_utility(point, prior) == doctest::Approx(std::log(25.0)).epsilon(1e-13));
    const GridPosterior other(5, random_positive(25, 6));
    CHECK(kl_utility(other, prior) > 0.0);
  }

  TEST_CASE("MAP ties go to the lowest index") {
    std::vector<double> w(9, 1.0);
    w[3] = 2.0;
    w[7] = 2.0;
    const PhysMap m = map_estimate(GridPosterior(3, w));
    CHECK(m.index == 3);
    CHECK(m.x == doctest::Approx(0.0));
    CHECK(m.y == doctest::Approx(0.5));
  }

  TEST_CASE("flattening") {
    const GridPosterior g = GridPosterior::gaussian(11, 0.5, 0.5, 0.1);
    const GridPosterior same = flatten_prior(g, 1.0);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(same[k] == doctest::Approx(g[k]).epsilon(1e-12));
    const GridPosterior flat = flatten_prior(g, 0.2);
    CHECK(kl_utility(flat, GridPosterior(11)) < kl_utility(g, GridPosterior(11)));
    CHECK(map_estimate(flat).index == map_estimate(g).index);
    CHECK_THROWS_AS(flatten_prior(g, 0.0), Error);
  }

  TEST_CASE("posterior metrics") {
    std::vector<double> w(9, 0.0);
    w[0] = 0.5;
    w[2] = 0.5;
    const PosteriorMetrics m = posterior_metrics(GridPosterior(3, w), 0.0, 1.0);
    CHECK(m.mean[0] == doctest::Approx(0.5));
    CHECK(m.mean[1] == doctest::Approx(0.0));
    CHECK(m.cov(0, 0) == doctest::Approx(0.25));
    CHECK(m.distance == doctest::Approx(1.0));
    CHECK(m.sigma_eq == doctest::Approx(0.0));
  }

  TEST_CASE("prediction cache matches direct forward solves") {
    const Stage s = small_stage();
    ModelSpec spec;
    spec.theta_h = 0.2;
    const VectorXd psi = VectorXd::Constant(1, 1.7);
    const PredictionCache cache = build_prediction_cache(s.stage, spec, psi, 5, 1);
    const GridPosterior lattice(5);
    const Design d{0.53, 0.41, 0.04};
    std::vector<double> all;
    cache.predict_all(d, all);
    REQUIRE(all.size() == 25);
    for (std::size_t k : {0u, 7u, 12u, 24u}) {
      const SourceDesignModel model(s.stage, spec, lattice.x(k), lattice.y(k), ForwardStrategy::direct);
      const double ref = model.bind(d)->evaluate(psi, false).g[0];
      CHECK(all[k] == doctest::Approx(ref).epsilon(1e-10));
      CHECK(cache.predict(k, d) == all[k]);
    }
  }

  TEST_CASE("strided cache is exact at stored nodes") {
    const Stage s = small_stage();
    ModelSpec spec;
    spec.theta_h = 0.2;
    const VectorXd psi = VectorXd::Constant(1, 2.0);
    const PredictionCache full = build_prediction_cache(s.stage, spec, psi, 9, 1);
    const PredictionCache strided = build_prediction_cache(s.stage, spec, psi, 9, 2);
    const Design d{0.5, 0.3, 0.04};
    for (int j = 0; j < 9; j += 2)
      for (int i = 0; i < 9; i += 2) {
        const std::size_t k = static_cast<std::size_t>(j * 9 + i);
        CHECK(strided.predict(k, d) == doctest::Approx(full.predict(k, d)).epsilon(1e-12));
      }
  }

  TEST_CASE("unit field bank rescales the unit solution") {
    const Stage s = small_stage();
    ModelSpec spec;
    spec.theta_h = 0.2;
    const UnitFieldBank bank(*s.solver, *s.schedule, spec.family, spec.theta_h, spec.quad, 5, 1);
    const PredictionCache scaled = bank.cache(1, 2.5);
    const PredictionCache direct = build_prediction_cache(s.stage, spec, VectorXd::Constant(1, 2.5), 5, 1);
    const Design d{0.61, 0.23, 0.04};
    std::vector<double> a, b;
    scaled.predict_all(d, a);
    direct.predict_all(d, b);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-10));
  }

  TEST_CASE("physical EIG and candidate search") {
    const Stage s = small_stage();
    ModelSpec spec;
    spec.theta_h = 0.2;
    const PredictionCache cache = build_prediction_cache(s.stage, spec, VectorXd::Constant(1, 2.0), 5, 1);
    Rng rng(3);
    const PhysicalDraws draws = draw_physical(40, rng);
    const GridPosterior prior(5);
    const double eig = eig_physical({0.5, 0.3, 0.04}, prior, cache, 0.0025, draws);
    CHECK(std::isfinite(eig));
    CHECK(eig > 0.0);

    CHECK(eig_physical({0.5, 0.3, 0.04}, prior, cache, 1e8, draws) < 1e-6);

    std::vector<double> w(25, 0.0);
    w[6] = 1.0;
    CHECK(eig_physical({0.5, 0.3, 0.04}, GridPosterior(5, w), cache, 0.0025, draws) ==
          doctest::Approx(0.0).epsilon(1e-12));

    const Design prev{0.5, 0.5, 0.04};
    Rng r1(8);
    const PhysicalDesignResult res = optimize_design_physical(prev, prior, cache, 0.0025, PhysicalSearch{0.2, 5, 20}, r1);
    REQUIRE(!res.candidates.empty());
    CHECK(res.candidates[0].x == prev.x);
    CHECK(res.candidates[0].y == prev.y);
    for (const Design& c : res.candidates) {
      CHECK(std::abs(c.x - prev.x) <= 0.2 + 1e-12);
      CHECK(std::abs(c.y - prev.y) <= 0.2 + 1e-12);
    }
    for (double v : res.values) CHECK(v <= res.eig);
    Rng r2(8);
    const PhysicalDesignResult again =
        optimize_design_physical(prev, prior, cache, 0.0025, PhysicalSearch{0.2, 5, 20}, r2);
    CHECK(again.chosen == res.chosen);
    CHECK(again.eig == res.eig);
  }
}
