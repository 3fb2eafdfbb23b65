#include <cmath>

#include "adeki/error.hpp"
#include "adeki/hybrid.hpp"
#include "doctest.h"

using namespace adeki;

namespace {

ExperimentConfig tiny(const std::string& base) {
  ExperimentConfig c = preset(base);
  c.grid.n = 21;
  c.n_stages = 3;
  c.physical.lattice_n = 11;
  c.physical.candidates = 3;
  c.physical.eig_samples = 6;
  c.network.ensemble_size = 8;
  c.network.iterations = 2;
  c.network.eig_samples = 2;
  c.network.optimizer.max_iters = 3;
  c.network.train.max_epochs = 20;
  return c;
}

void check_same(const StageRecord& a, const StageRecord& b) {
  CHECK(a.d_g.x == b.d_g.x);
  CHECK(a.d_g.y == b.d_g.y);
  CHECK(a.y_g == b.y_g);
  CHECK(a.eig_g == b.eig_g);
  CHECK(a.after.map.index == b.after.map.index);
  CHECK(a.network_step == b.network_step);
  CHECK(a.d_nn.x == b.d_nn.x);
  CHECK(a.d_nn.y == b.d_nn.y);
  CHECK(a.y_nn == b.y_nn);
  CHECK(a.psi_after == b.psi_after);
}

}  // namespace

TEST_SUITE("hybrid") {
  TEST_CASE("runs replay exactly from the seed") {
    const Experiment ex(tiny("parametric"));
    const RunResult a = run_sequential(ex, 3, 11, true);
    const RunResult b = run_sequential(ex, 3, 11, true);
    REQUIRE(a.records.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) check_same(a.records[k], b.records[k]);
    const RunResult c = run_sequential(ex, 3, 12, true);
    CHECK(c.records[0].y_g != a.records[0].y_g);
  }

  TEST_CASE("stage loop threads the state") {
    const Experiment ex(tiny("parametric"));
    const RunResult seq = run_sequential(ex, 3, 5, true);
    RunState s = initial_state(ex, 5);
    for (int k = 0; k < 3; ++k) {
      const StageRecord r = run_stage(ex, s, k, 5, true);
      check_same(r, seq.records[static_cast<std::size_t>(k)]);
      CHECK(r.stage == k + 1);
      CHECK(r.time == doctest::Approx(ex.config().stage_times[static_cast<std::size_t>(k)]));
      CHECK(s.d_prev.x == r.d_g.x);
      CHECK(s.psi == r.psi_after);
    }
    CHECK(s.physical.size() == 3);
    CHECK(seq.posteriors.size() == 3);
  }

  TEST_CASE("a single stage equals run_stage from the initial state") {
    const Experiment ex(tiny("parametric"));
    const RunResult one = run_sequential(ex, 1, 3, true);
    RunState s = initial_state(ex, 3);
    const StageRecord r = run_stage(ex, s, 0, 3, true);
    check_same(one.records[0], r);
    CHECK_THROWS_AS(run_sequential(ex, 4, 3, true), Error);
  }

  TEST_CASE("stage 1 skips the network step") {
    const Experiment ex(tiny("parametric"));
    const RunResult r = run_sequential(ex, 2, 7, true);
    CHECK(!r.records[0].network_step);
    CHECK(r.records[0].psi_after == r.records[0].psi_before);
    CHECK(r.records[1].network_step);
    CHECK(r.state.data.size() == 1);
  }

  TEST_CASE("physical designs respect the step box") {
    const Experiment ex(tiny("parametric"));
    const RunResult r = run_sequential(ex, 3, 9, true);
    Design prev{ex.config().initial_x, ex.config().initial_y, 0.0};
    for (const StageRecord& rec : r.records) {
      CHECK(std::abs(rec.d_g.x - prev.x) <= ex.config().physical.step_box + 1e-12);
      CHECK(std::abs(rec.d_g.y - prev.y) <= ex.config().physical.step_box + 1e-12);
      CHECK(rec.d_g.x >= 0.0);
      CHECK(rec.d_g.x <= 1.0);
      CHECK(rec.d_g.y >= 0.0);
      CHECK(rec.d_g.y <= 1.0);
      prev = rec.d_g;
    }
  }

  TEST_CASE("baseline keeps the error parameters fixed") {
    const Experiment ex(tiny("parametric"));
    const RunResult r = run_sequential(ex, 3, 4, false);
    for (const StageRecord& rec : r.records) {
      CHECK(!rec.network_step);
      CHECK(!rec.corrected);
      CHECK(rec.psi_after == r.records[0].psi_before);
    }
    CHECK(r.state.data.empty());
  }

  TEST_CASE("posteriors are normalized and the KL is non-negative") {
    const Experiment ex(tiny("parametric"));
    const RunResult r = run_sequential(ex, 3, 2, true);
    for (const GridPosterior& p : r.posteriors) {
      double s = 0.0;
      for (double v : p.probs()) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const StageRecord& rec : r.records) CHECK(rec.posterior_kl >= 0.0);
  }

  TEST_CASE("network model trains the correction") {
    const Experiment ex(tiny("structural"));
    const RunResult r = run_sequential(ex, 2, 1, true);
    REQUIRE(r.records[1].network_step);
    CHECK(r.records[1].psi_after.size() == net::kParams);
    CHECK(r.records[1].train_loss_after <= r.records[1].train_loss_before);
  }

  TEST_CASE("field error report covers every stage") {
    const Experiment ex(tiny("parametric"));
    const RunResult c = run_sequential(ex, 3, 1, true);
    const RunResult b = run_sequential(ex, 3, 1, false);
    const FieldErrorReport rep = field_error_report(ex, c, b);
    CHECK(rep.corrected.size() == 3);
    CHECK(rep.baseline.size() == 3);
    CHECK(rep.corrected[0].next_local.has_value());
    CHECK(!rep.corrected[2].next_local.has_value());
    // stage 1 is identical in both runs
    CHECK(rep.corrected[0].total.mse == doctest::Approx(rep.baseline[0].total.mse));
  }

  TEST_CASE("stage substreams") {
    Rng a = stage_rng(1, 2, Purpose::truth_g);
    Rng b = stage_rng(1, 2, Purpose::truth_g);
    Rng c = stage_rng(1, 2, Purpose::truth_nn);
    Rng d = stage_rng(1, 3, Purpose::truth_g);
    const double va = a.normal();
    CHECK(va == b.normal());
    CHECK(va != c.normal());
    CHECK(va != d.normal());
  }
}
