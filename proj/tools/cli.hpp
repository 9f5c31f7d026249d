#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"
#include "marketgraph/training.hpp"

namespace marketgraph::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Full-run configuration read from JSON. Unknown keys are ConfigErrors;
/// absent keys keep the defaults.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output_dir = "out";
  std::string model = "mtgnn";
  ExperimentConfig experiment{};
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Entry point behind the `marketgraph` executable; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace marketgraph::cli
