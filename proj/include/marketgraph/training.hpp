#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "marketgraph/forecaster.hpp"
#include "marketgraph/graph_learning.hpp"
#include "marketgraph/pipeline.hpp"

namespace marketgraph {

/// Shared optimisation settings. The loss is always mean absolute error.
struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double dropout = 0.3;
  std::size_t gc_depth = 2;
  std::size_t conv_channels = 16;
  std::size_t residual_channels = 16;
  std::size_t skip_channels = 32;
  double l2_coefficient = 1e-4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  /// Mean l1 data loss over the epoch's mini-batches (training mode).
  double train_loss = 0.0;
  /// Eval-mode l1 loss on the validation windows; NaN without validation data.
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// Epoch whose parameters were kept; 0 when the model is unchanged.
  std::size_t best_epoch = 0;

  void write_csv(const std::filesystem::path& path) const;
};

/// Mini-batch Adam on l1 + l2_coefficient * sum of squared parameters.
/// Keeps the parameters of the epoch with the lowest validation loss (the
/// last epoch when `validation` is empty). A non-finite loss throws
/// TrainingDiverged. Initialisation is the caller's; shuffling and dropout
/// draw from streams of `config.seed`.
TrainHistory train(NeuralForecaster& model, const WindowSet& train_windows,
                   const WindowSet& validation, const TrainConfig& config);

/// Eval-mode mean l1 loss over a window set.
double mean_l1_loss(const Forecaster& model, const WindowSet& windows);

enum class MetricScale { normalized, log, price };
std::string to_string(MetricScale scale);
MetricScale parse_metric_scale(const std::string& text);

struct SeriesMetrics {
  std::string name;
  std::optional<double> rse, rmse, mae, mape;
  /// Why a metric is missing (e.g. RSE of a constant series).
  std::vector<std::string> errors;
};

struct MetricsReport {
  std::string model;
  MetricScale scale = MetricScale::log;
  std::vector<SeriesMetrics> series;
  nlohmann::json hyperparameters = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Rolling one-step predictions on the price scale, [steps, N].
struct PredictionTrace {
  std::vector<std::string> series;
  std::vector<Date> dates;
  Tensor actual;
  Tensor predicted;

  std::size_t size() const noexcept { return dates.size(); }
  /// date, then <name>_actual, <name>_predicted for every series.
  void write_csv(const std::filesystem::path& path) const;
};

struct Evaluation {
  MetricsReport report;
  PredictionTrace trace;
};

struct EvaluateOptions {
  MetricScale scale = MetricScale::log;
  /// Whether the pipeline took logs (decides how to reach price scale).
  bool log_applied = true;
};

/// One-step-ahead forecasts for every test window, metrics on the chosen
/// scale and a price-scale trace.
Evaluation evaluate(const Forecaster& model, const WindowSet& test, const NormStats& stats,
                    const EvaluateOptions& options = {});

struct MtgnnSettings {
  std::size_t num_layers = 3;
  std::size_t end_channels = 64;
  std::size_t embedding_dim = 40;
  double retain_ratio = 0.05;
  double saturation = 3.0;
  std::size_t top_k = 5;
  std::size_t kernel_size = 3;
};

struct BaselineSettings {
  std::size_t ar_order = 5;
  std::size_t var_order = 2;
  std::size_t mlp_hidden = 32;
  std::size_t gru_hidden = 32;
  std::size_t tcn_channels = 16;
  std::size_t tcn_kernel = 3;
  std::size_t tcn_levels = 3;
};

struct ExperimentConfig {
  PipelineConfig pipeline{};
  TrainConfig train{};
  MtgnnSettings mtgnn{};
  BaselineSettings baselines{};
  MetricScale scale = MetricScale::log;
  std::vector<std::string> models{"ar", "var-mlp", "rnn-gru", "tcn", "mtgnn"};

  nlohmann::json to_json() const;
};

/// Model kinds accepted by fit_model.
const std::vector<std::string>& model_kinds();

struct FittedModel {
  std::unique_ptr<Forecaster> model;
  std::optional<TrainHistory> history;
  /// Learned graph with series labels, for models that learn one.
  std::optional<AdjacencyMatrix> adjacency;
};

/// Builds, initialises and trains one model kind on prepared data.
FittedModel fit_model(const std::string& kind, const PreparedData& data,
                      const ExperimentConfig& config);

struct ModelOutcome {
  std::string model;
  std::optional<Evaluation> evaluation;
  std::optional<TrainHistory> history;
  std::string error;
};

struct ComparisonTable {
  std::vector<std::string> series;
  MetricScale scale = MetricScale::log;
  std::vector<ModelOutcome> outcomes;
  nlohmann::json config = nlohmann::json::object();

  /// Per series and metric: values by model, plus the best and second-best
  /// model (lowest value, earlier model on ties).
  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

/// Trains every configured model on the same splits and windows. A failing
/// model is reported with its error and does not stop the others.
ComparisonTable run_comparison(const TimeSeriesFrame& frame, const ExperimentConfig& config,
                               const std::vector<std::string>& dropped_dates = {});

}  // namespace marketgraph
