#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "json.hpp"
#include "marketgraph/forecaster.hpp"
#include "marketgraph/pipeline.hpp"

namespace marketgraph {

inline constexpr int kCheckpointVersion = 1;

/// Preprocessing needed to feed new data to a saved model.
struct PipelineState {
  PipelineConfig config;
  NormStats stats;
};

struct Checkpoint {
  std::unique_ptr<Forecaster> model;
  std::optional<PipelineState> pipeline;
};

/// {"format": "marketgraph-checkpoint", "version", "kind", "model", "pipeline"?}
nlohmann::json checkpoint_to_json(const Forecaster& model,
                                  const std::optional<PipelineState>& pipeline = std::nullopt);
/// Rejects unknown formats, versions and kinds with ConfigError.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void write_checkpoint(const std::filesystem::path& path, const Forecaster& model,
                      const std::optional<PipelineState>& pipeline = std::nullopt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace marketgraph
