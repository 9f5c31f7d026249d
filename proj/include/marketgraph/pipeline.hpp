#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "marketgraph/data.hpp"

namespace marketgraph {

/// Divide `column` by `divisor` on rows dated before `cutoff`.
struct RebaseRule {
  std::string column;
  Date cutoff{};
  double divisor = 100.0;
};

struct PipelineConfig {
  std::vector<RebaseRule> rebase;
  bool log_transform = true;
  SplitSpec split{};
  WindowSpec window{};

  void validate() const;
};

/// Output of the fixed stage order adjust -> log -> split -> normalize -> window.
struct PreparedData {
  std::vector<std::string> columns;
  /// Split frames after adjust/log, before normalization.
  Splits transformed;
  /// Split frames on the normalized scale.
  Splits normalized;
  NormStats stats;
  WindowSet train;
  WindowSet validation;
  WindowSet test;
  /// Stage hashes, dropped rows, split boundaries and normalization statistics.
  nlohmann::json report;
};

PreparedData prepare(const TimeSeriesFrame& frame, const PipelineConfig& config,
                     const std::vector<std::string>& dropped_dates = {});

/// adjust -> log -> normalize with previously fitted statistics, for new data.
TimeSeriesFrame apply_transforms(const TimeSeriesFrame& frame, const PipelineConfig& config,
                                 const NormStats& stats);

/// Normalized value back to price scale: exp(denormalize(z)) when logs were taken.
double to_price(const NormStats& stats, std::size_t col, double z, bool log_applied);

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);

}  // namespace marketgraph
