#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "adeki/config.hpp"
#include "adeki/error.hpp"
#include "adeki/hybrid.hpp"
#include "adeki/io.hpp"
#include "adeki/parallel.hpp"
#include "adeki/verification.hpp"

namespace fs = std::filesystem;
using namespace adeki;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

std::string config_path(const Common& c) {
  if (!c.config.empty()) return c.config;
  if (const char* env = std::getenv("ADEKI_CONFIG"); env && *env) return env;
  return {};
}

ExperimentConfig resolve(const Common& c, const std::string& fallback_preset) {
  const std::string path = config_path(c);
  if (path.empty() && fallback_preset.empty())
    fail(ErrorKind::config, "no config given (use --config or ADEKI_CONFIG)");
  ExperimentConfig cfg = path.empty() ? preset(fallback_preset) : load_config(path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  cfg.validate();
  set_max_threads(cfg.threads);
  return cfg;
}

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create output directory '" + out + "'");
  return dir;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = resolve(c, "");
  const fs::path dir = prepare_out(c.out.empty() ? "adeki_out" : c.out);
  const Experiment ex(cfg);

  std::cerr << "[adeki] " << cfg.name << ": corrected run, " << cfg.n_stages << " stages\n";
  const RunResult corrected = run_sequential(ex, cfg.n_stages, cfg.seed, true);
  std::optional<RunResult> baseline;
  std::optional<FieldErrorReport> errors;
  if (cfg.baseline) {
    std::cerr << "[adeki] " << cfg.name << ": baseline run\n";
    baseline = run_sequential(ex, cfg.n_stages, cfg.seed, false);
    errors = field_error_report(ex, corrected, *baseline);
  }

  std::vector<std::string> files{"records.jsonl", "kl_traces.csv", "design_trajectory.csv", "theta_trajectory.csv"};
  write_atomic((dir / "records.jsonl").string(), records_jsonl(corrected.records));
  write_atomic((dir / "kl_traces.csv").string(), kl_traces_csv(corrected));
  std::vector<const RunResult*> runs{&corrected};
  if (baseline) runs.push_back(&*baseline);
  write_atomic((dir / "design_trajectory.csv").string(), design_trajectory_csv(runs));
  write_atomic((dir / "theta_trajectory.csv").string(), theta_trajectory_csv(runs));
  for (std::size_t i = 0; i < corrected.posteriors.size(); ++i) {
    const std::string name = "posterior_stage" + std::to_string(i + 1) + ".csv";
    write_atomic((dir / name).string(), posterior_csv(corrected.posteriors[i]));
    files.push_back(name);
  }
  if (baseline) {
    write_atomic((dir / "baseline_records.jsonl").string(), records_jsonl(baseline->records));
    write_atomic((dir / "field_errors.csv").string(), field_errors_csv(*errors));
    files.push_back("baseline_records.jsonl");
    files.push_back("field_errors.csv");
  }
  files.push_back("metrics_summary.json");
  write_atomic((dir / "manifest.json").string(), manifest_json(cfg, files));
  write_atomic((dir / "metrics_summary.json").string(), metrics_summary_json(cfg, corrected, baseline, errors));

  const StageRecord& last = corrected.records.back();
  std::cout << "final D (corrected) = " << last.after.distance;
  if (baseline) std::cout << ", final D (baseline) = " << baseline->records.back().after.distance;
  if (last.psi_after.size() == 1) std::cout << ", theta_s = " << last.psi_after[0];
  std::cout << "\nwrote " << dir.string() << "\n";
  return 0;
}

int cmd_gradcheck(const Common& c, bool truncate) {
  const ExperimentConfig cfg = resolve(c, "gradcheck");
  const GradcheckReport report = run_gradcheck(cfg, truncate);
  const std::string csv = gradcheck_csv(report);
  if (c.out.empty()) {
    std::cout << csv;
  } else {
    const fs::path dir = prepare_out(c.out);
    write_atomic((dir / "gradcheck.csv").string(), csv);
  }
  std::cout << (report.pass() ? "PASS" : "FAIL") << " gradcheck: " << report.passed << "/" << report.rows.size()
            << " designs below " << cfg.gradcheck.tol << ", max rel err " << report.max_rel_err << " ("
            << report.seconds << " s)\n";
  return report.pass() ? 0 : 1;
}

int cmd_bench(const Common& c, const std::string& sweep_name, const std::string& mode_name) {
  const ExperimentConfig cfg = resolve(c, "parametric_coarse");
  const BenchSweep sweep = sweep_name == "iterations" ? BenchSweep::iterations : BenchSweep::ensemble_size;
  const CheckpointMode mode = mode_name == "store_all" ? CheckpointMode::store_all : CheckpointMode::checkpoint;
  const std::vector<BenchRow> rows = run_bench(cfg, sweep, mode);
  const std::string csv = bench_csv(rows);
  if (c.out.empty()) {
    std::cout << csv;
  } else {
    const fs::path dir = prepare_out(c.out);
    write_atomic((dir / ("bench_" + sweep_name + "_" + mode_name + ".csv")).string(), csv);
  }
  const BenchSummary s = summarize_bench(rows, sweep);
  std::cout << "time R^2 = " << s.time_r2 << ", peak memory spread = " << s.memory_spread << "\n";
  return 0;
}

int cmd_presets(const Common& c, const std::string& name) {
  std::vector<std::string> names = name.empty() ? std::vector<std::string>{"parametric", "structural"}
                                                : std::vector<std::string>{name};
  if (name == "all") names = preset_names();
  if (c.out.empty()) {
    for (const std::string& n : names) std::cout << config_to_json(preset(n)) << "\n";
    return 0;
  }
  const fs::path dir = prepare_out(c.out);
  for (const std::string& n : names) write_atomic((dir / (n + ".json")).string(), config_to_json(preset(n)) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid sequential experimental design with differentiable ensemble Kalman inversion"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config file (falls back to $ADEKI_CONFIG)");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "Output directory");
  };

  CLI::App* run = app.add_subcommand("run", "Run the sequential design experiment");
  add_common(run);
  CLI::App* grad = app.add_subcommand("gradcheck", "Compare design gradients with finite differences");
  add_common(grad);
  bool truncate = false;
  grad->add_flag("--truncate-theta-chain", truncate, "Drop the parameter-path terms of the reverse chain");
  CLI::App* bench = app.add_subcommand("bench", "Time and memory sweeps of one gradient evaluation");
  add_common(bench);
  std::string sweep = "ensemble-size", mode = "checkpoint";
  bench->add_option("--sweep", sweep, "ensemble-size | iterations")
      ->check(CLI::IsMember({"ensemble-size", "iterations"}));
  bench->add_option("--mode", mode, "checkpoint | store_all")->check(CLI::IsMember({"checkpoint", "store_all"}));
  CLI::App* presets = app.add_subcommand("presets", "Print or write the built-in configurations");
  add_common(presets);
  std::string preset_name;
  presets->add_option("--name", preset_name, "Preset name, or 'all'");

  CLI11_PARSE(app, argc, argv);

  const auto finalize = [&](CLI::App* sub) {
    if (sub->count("--seed")) common.seed = seed;
    if (sub->count("--threads")) common.threads = threads;
  };
  try {
    if (*run) {
      finalize(run);
      return cmd_run(common);
    }
    if (*grad) {
      finalize(grad);
      return cmd_gradcheck(common, truncate);
    }
    if (*bench) {
      finalize(bench);
      return cmd_bench(common, sweep, mode);
    }
    if (*presets) return cmd_presets(common, preset_name);
  } catch (const Error& e) {
    std::cerr << "adeki: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "adeki: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
