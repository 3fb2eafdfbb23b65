#pragma once

#include <string>
#include <vector>

#include "adeki/config.hpp"

namespace adeki {

struct GradcheckRow {
  Design design;
  Eigen::Vector2d analytic = Eigen::Vector2d::Zero();
  Eigen::Vector2d fd = Eigen::Vector2d::Zero();
  double value = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double max_rel_err = 0.0;
  int passed = 0;
  double seconds = 0.0;
  bool pass() const noexcept { return passed == static_cast<int>(rows.size()); }
};

/// Analytic design gradient of the ensemble KL against central differences
/// under common random numbers, on the gradcheck grid with a scalar-strength
/// model and measured data.
GradcheckReport run_gradcheck(const ExperimentConfig& cfg, bool truncate_theta_chain = false);

std::string gradcheck_csv(const GradcheckReport& report);

enum class BenchSweep { ensemble_size, iterations };

struct BenchRow {
  std::string sweep;
  int ensemble_size = 0;
  int iterations = 0;
  int repetition = 0;
  std::string mode;
  double seconds = 0.0;
  std::size_t peak_bytes = 0;
};

/// Times one grad_kl_wrt_design evaluation per sweep point and records the
/// peak instrumented memory above the level before the call.
std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, BenchSweep sweep, CheckpointMode mode);

std::string bench_csv(const std::vector<BenchRow>& rows);

/// R^2 of a line through (sweep value, mean seconds) and the relative spread
/// (max - min) / min of mean peak memory over the sweep points.
struct BenchSummary {
  double time_r2 = 0.0;
  double memory_spread = 0.0;
};

BenchSummary summarize_bench(const std::vector<BenchRow>& rows, BenchSweep sweep);

}  // namespace adeki
