#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "adeki/ad_engine.hpp"
#include "adeki/config.hpp"
#include "adeki/hybrid.hpp"

using namespace adeki;

namespace {

struct Setup {
  std::unique_ptr<Experiment> ex;
  std::unique_ptr<SourceDesignModel> model;
  MatrixXd gamma;
};

Setup& setup() {
  static Setup s = [] {
    ExperimentConfig c = preset("parametric_coarse");
    c.grid.n = 41;
    Setup out;
    out.ex = std::make_unique<Experiment>(c);
    out.model = std::make_unique<SourceDesignModel>(out.ex->stage(2), c.model_spec(), c.truth.x, c.truth.y,
                                                    ForwardStrategy::direct);
    out.gamma = out.ex->gamma();
    return out;
  }();
  return s;
}

void run(benchmark::State& state, int j, int k, CheckpointMode mode) {
  Setup& s = setup();
  Rng rng(1);
  const KlSample sample = draw_kl_sample(VectorXd::Constant(1, 3.0), VectorXd::Ones(1), j, k, s.gamma, rng);
  const ObservationFn obs = measured_observation(s.ex->truth(), VectorXd::Zero(1));
  const Design d{0.47, 0.27, s.ex->stage(2).time()};
  AdOptions opt;
  opt.eki.iterations = k;
  opt.mode = mode;
  for (auto _ : state) benchmark::DoNotOptimize(grad_kl_wrt_design(d, sample, obs, *s.model, s.gamma, opt));
}

void BM_GradEnsembleSize(benchmark::State& state) {
  run(state, static_cast<int>(state.range(0)), 4, CheckpointMode::checkpoint);
}
void BM_GradIterations(benchmark::State& state) {
  run(state, 20, static_cast<int>(state.range(0)), CheckpointMode::checkpoint);
}
void BM_GradIterationsStoreAll(benchmark::State& state) {
  run(state, 20, static_cast<int>(state.range(0)), CheckpointMode::store_all);
}

void BM_ForwardSolve(benchmark::State& state) {
  Setup& s = setup();
  const VectorXd psi = VectorXd::Constant(1, 2.0);
  for (auto _ : state) {
    const auto map = s.model->bind({0.47, 0.27, s.ex->stage(2).time()});
    benchmark::DoNotOptimize(map->evaluate(psi, false));
  }
}

}  // namespace

BENCHMARK(BM_GradEnsembleSize)->Arg(10)->Arg(20)->Arg(40)->Arg(80)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradIterations)->Arg(2)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradIterationsStoreAll)->Arg(2)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardSolve)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
