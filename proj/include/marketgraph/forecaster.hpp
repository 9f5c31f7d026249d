#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "marketgraph/data.hpp"
#include "marketgraph/rng.hpp"
#include "marketgraph/tape.hpp"

namespace marketgraph {

/// A model that maps a normalized window [N, P] to forecasts [N, Q].
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  /// Checkpoint kind tag ("mtgnn", "ar", "var-mlp", "rnn-gru", "tcn", "persistence").
  virtual std::string kind() const = 0;
  virtual std::size_t nodes() const = 0;
  virtual WindowSpec window() const = 0;

  virtual Tensor predict(const Tensor& window) const = 0;

  /// Hyperparameters echoed into reports.
  virtual nlohmann::json hyperparameters() const = 0;
  /// Checkpoint body: everything needed to rebuild the model.
  virtual nlohmann::json to_json() const = 0;

  /// Learned graph, for models that have one.
  virtual std::optional<Tensor> learned_adjacency() const { return std::nullopt; }

 protected:
  void check_window(const Tensor& window) const;
};

/// Forecaster trained by gradient descent through the tape.
class NeuralForecaster : public Forecaster {
 public:
  virtual std::vector<Parameter*> parameters() = 0;

  /// inputs [B, N, P] -> predictions [B, Q, N]. Parameters are recorded as
  /// tape leaves; `train` enables dropout drawn from `rng`.
  virtual Var forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) = 0;

  /// Eval-mode forward of a single window.
  Tensor predict(const Tensor& window) const override;

  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& values);

 protected:
  nlohmann::json parameters_json() const;
  void load_parameters_json(const nlohmann::json& j);
};

/// Repeats the last observed value of every series.
class PersistenceForecaster final : public Forecaster {
 public:
  PersistenceForecaster(std::size_t nodes, WindowSpec window) : nodes_(nodes), window_(window) {}

  std::string kind() const override { return "persistence"; }
  std::size_t nodes() const override { return nodes_; }
  WindowSpec window() const override { return window_; }
  Tensor predict(const Tensor& window) const override;
  nlohmann::json hyperparameters() const override { return nlohmann::json::object(); }
  nlohmann::json to_json() const override;

 private:
  std::size_t nodes_;
  WindowSpec window_;
};

// Parameter initialisation helpers shared by the models.
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace marketgraph
