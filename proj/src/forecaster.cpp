#include "marketgraph/forecaster.hpp"

#include <cmath>

#include "marketgraph/errors.hpp"

namespace marketgraph {

void Forecaster::check_window(const Tensor& window) const {
  const WindowSpec spec = this->window();
  if (window.rank() != 2 || window.dim(0) != nodes() || window.dim(1) != spec.input_steps) {
    throw DimensionError(kind() + ": expected window [" + std::to_string(nodes()) + "x" +
                         std::to_string(spec.input_steps) + "], got " +
                         shape_string(window.shape()));
  }
}

Tensor NeuralForecaster::predict(const Tensor& window) const {
  check_window(window);
  // Eval mode only reads parameter values; the tape never runs backward.
  auto& self = const_cast<NeuralForecaster&>(*this);
  Tape tape;
  Rng unused(0);
  Var out = self.forward_batch(tape, window.reshaped({1, window.dim(0), window.dim(1)}), false,
                               unused);
  const std::size_t q = this->window().horizon, n = nodes();
  Tensor result({n, q});
  for (std::size_t h = 0; h < q; ++h)
    for (std::size_t i = 0; i < n; ++i) result.at(i, h) = out.value()[h * n + i];
  return result;
}

std::vector<Tensor> NeuralForecaster::snapshot() {
  std::vector<Tensor> out;
  for (Parameter* p : parameters()) out.push_back(p->value);
  return out;
}

void NeuralForecaster::restore(const std::vector<Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw DimensionError("snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i]->value.shape()) {
      throw DimensionError("snapshot shape mismatch for '" + params[i]->name + "'");
    }
    params[i]->value = values[i];
  }
}

nlohmann::json NeuralForecaster::parameters_json() const {
  auto& self = const_cast<NeuralForecaster&>(*this);
  nlohmann::json arr = nlohmann::json::array();
  for (const Parameter* p : self.parameters()) {
    nlohmann::json entry = tensor_to_json(p->value);
    entry["name"] = p->name;
    arr.push_back(std::move(entry));
  }
  return arr;
}

void NeuralForecaster::load_parameters_json(const nlohmann::json& j) {
  auto params = parameters();
  if (!j.is_array() || j.size() != params.size()) {
    throw ConfigError(kind() + " checkpoint: expected " + std::to_string(params.size()) +
                      " parameter arrays");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = j[i];
    if (entry.at("name").get<std::string>() != params[i]->name) {
      throw ConfigError(kind() + " checkpoint: parameter " + std::to_string(i) + " is '" +
                        entry.at("name").get<std::string>() + "', expected '" +
                        params[i]->name + "'");
    }
    Tensor value = tensor_from_json(entry);
    if (value.shape() != params[i]->value.shape()) {
      throw ConfigError(kind() + " checkpoint: shape mismatch for '" + params[i]->name + "'");
    }
    params[i]->value = std::move(value);
    params[i]->zero_grad();
  }
}

Tensor PersistenceForecaster::predict(const Tensor& window) const {
  check_window(window);
  const std::size_t p = window_.input_steps, q = window_.horizon;
  Tensor out({nodes_, q});
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t h = 0; h < q; ++h) out.at(i, h) = window.at(i, p - 1);
  return out;
}

nlohmann::json PersistenceForecaster::to_json() const {
  return {{"nodes", nodes_},
          {"input_steps", window_.input_steps},
          {"horizon", window_.horizon}};
}

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape()},
          {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
}

}  // namespace marketgraph
