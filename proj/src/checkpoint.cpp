#include "marketgraph/checkpoint.hpp"

#include <fstream>

#include "marketgraph/baselines.hpp"
#include "marketgraph/errors.hpp"
#include "marketgraph/mtgnn.hpp"

namespace marketgraph {
namespace {

constexpr const char* kFormat = "marketgraph-checkpoint";

std::unique_ptr<Forecaster> model_from_json(const std::string& kind, const nlohmann::json& j) {
  if (kind == "mtgnn") return std::make_unique<MtgnnModel>(MtgnnModel::from_json(j));
  if (kind == "ar") return std::make_unique<ArForecaster>(ArForecaster::from_json(j));
  if (kind == "var-mlp") return std::make_unique<VarMlpModel>(VarMlpModel::from_json(j));
  if (kind == "rnn-gru") return std::make_unique<GruModel>(GruModel::from_json(j));
  if (kind == "tcn") return std::make_unique<TcnModel>(TcnModel::from_json(j));
  if (kind == "persistence") {
    WindowSpec w{j.at("input_steps").get<std::size_t>(), j.at("horizon").get<std::size_t>()};
    return std::make_unique<PersistenceForecaster>(j.at("nodes").get<std::size_t>(), w);
  }
  throw ConfigError("checkpoint: unknown model kind '" + kind + "'");
}

}  // namespace

nlohmann::json checkpoint_to_json(const Forecaster& model,
                                  const std::optional<PipelineState>& pipeline) {
  nlohmann::json j{{"format", kFormat},
                   {"version", kCheckpointVersion},
                   {"kind", model.kind()},
                   {"model", model.to_json()}};
  if (pipeline) {
    j["pipeline"] = {{"config", to_json(pipeline->config)},
                     {"norm_stats", to_json(pipeline->stats)}};
  }
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != kFormat) {
      throw ConfigError("not a marketgraph checkpoint");
    }
    if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version");
    }
    Checkpoint cp;
    cp.model = model_from_json(j.at("kind").get<std::string>(), j.at("model"));
    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      cp.pipeline = PipelineState{pipeline_config_from_json(p.at("config")),
                                  norm_stats_from_json(p.at("norm_stats"))};
      if (cp.pipeline->stats.columns.size() != cp.model->nodes()) {
        throw ConfigError("checkpoint: pipeline and model disagree on the series count");
      }
    }
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Forecaster& model,
                      const std::optional<PipelineState>& pipeline) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  // max_digits10 round-trips every double.
  out << checkpoint_to_json(model, pipeline).dump() << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace marketgraph
