#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adeki/hybrid.hpp"

namespace adeki {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_atomic(const std::string& path, const std::string& content);

std::string stage_record_json(const StageRecord& r);
std::string records_jsonl(const std::vector<StageRecord>& records);

std::string posterior_csv(const GridPosterior& p);
std::string kl_traces_csv(const RunResult& corrected);
std::string design_trajectory_csv(const std::vector<const RunResult*>& runs);
std::string theta_trajectory_csv(const std::vector<const RunResult*>& runs);
std::string field_errors_csv(const FieldErrorReport& report);

std::string manifest_json(const ExperimentConfig& cfg, const std::vector<std::string>& files);
std::string metrics_summary_json(const ExperimentConfig& cfg, const RunResult& corrected,
                                 const std::optional<RunResult>& baseline,
                                 const std::optional<FieldErrorReport>& errors);

}  // namespace adeki
