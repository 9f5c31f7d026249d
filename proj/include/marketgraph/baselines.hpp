#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "marketgraph/forecaster.hpp"

namespace marketgraph {

struct TrainConfig;

// ---- AR(p) ----------------------------------------------------------------

/// x_t = intercept + sum_i coefficients[i-1] * x_{t-i}.
struct ArModel {
  std::size_t order = 0;
  double intercept = 0.0;
  std::vector<double> coefficients;
};

/// Least squares with an intercept. A constant series gives the
/// intercept-only model; any other rank deficiency is a SingularSystemError.
ArModel fit_ar(std::span<const double> series, std::size_t order);

/// Recursive forecasts; `history` must hold at least `order` values.
std::vector<double> predict_ar(const ArModel& model, std::span<const double> history,
                               std::size_t steps);

/// One independent AR model per series.
class ArForecaster final : public Forecaster {
 public:
  ArForecaster(std::vector<ArModel> models, WindowSpec window);
  /// Fits every column of `frame` (normalized training split).
  static ArForecaster fit(const TimeSeriesFrame& frame, std::size_t order, WindowSpec window);

  const std::vector<ArModel>& models() const noexcept { return models_; }

  std::string kind() const override { return "ar"; }
  std::size_t nodes() const override { return models_.size(); }
  WindowSpec window() const override { return window_; }
  Tensor predict(const Tensor& window) const override;
  nlohmann::json hyperparameters() const override;
  nlohmann::json to_json() const override;
  static ArForecaster from_json(const nlohmann::json& j);

 private:
  std::vector<ArModel> models_;
  WindowSpec window_;
};

// ---- VAR + residual MLP -----------------------------------------------------

/// x_t = intercept + sum_l coefficients[l-1] x_{t-l}, coefficients[l] being
/// [N, N] with entry (i, j) the effect of series j on series i.
struct VarModel {
  std::size_t order = 0;
  std::vector<double> intercept;
  std::vector<Tensor> coefficients;

  std::size_t nodes() const noexcept { return intercept.size(); }
  /// One-step forecast from lags [N, >= order], most recent last.
  std::vector<double> step(const Tensor& history) const;
};

VarModel fit_var(const TimeSeriesFrame& frame, std::size_t order);

struct MlpSpec {
  std::size_t hidden = 32;
};

/// VAR forecast plus an MLP correction fed the flattened lags [N * order].
/// The MLP's output layer starts at zero, so an untrained model is pure VAR.
class VarMlpModel final : public NeuralForecaster {
 public:
  VarMlpModel(VarModel var, MlpSpec mlp, WindowSpec window, Rng& rng);

  const VarModel& var() const noexcept { return var_; }
  const MlpSpec& mlp() const noexcept { return mlp_; }
  /// Pure VAR part of the forecast for a window [N, P] -> [N, Q].
  Tensor var_forecast(const Tensor& window) const;

  std::string kind() const override { return "var-mlp"; }
  std::size_t nodes() const override { return var_.nodes(); }
  WindowSpec window() const override { return window_; }
  nlohmann::json hyperparameters() const override;
  nlohmann::json to_json() const override;
  static VarMlpModel from_json(const nlohmann::json& j);

  /// Only the MLP is trainable; the VAR part is fixed by least squares.
  std::vector<Parameter*> parameters() override;
  Var forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) override;

 private:
  VarModel var_;
  MlpSpec mlp_;
  WindowSpec window_;
  Parameter w1_, b1_, w2_, b2_;
};

/// Fits the VAR on `frame` by least squares, then trains the MLP on windows
/// of `frame` with the shared training loop. `window.input_steps` must be at
/// least `var_order`.
VarMlpModel fit_var_mlp(const TimeSeriesFrame& frame, std::size_t var_order, MlpSpec mlp,
                        WindowSpec window, const TrainConfig& train);

// ---- GRU ------------------------------------------------------------------

/// Gate weights: input [In, H], recurrent [H, H], bias [H]. Row-vector convention.
struct GruCellVars {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_h, u_h, b_h;
};

/// x [B, In], h [B, H]. z and r gate, h' = (1 - z) * h + z * tanh(x W_h + (r * h) U_h + b_h).
Var gru_cell(const Var& x, const Var& h, const GruCellVars& p);

struct GruConfig {
  std::size_t nodes = 0;
  std::size_t hidden = 32;
  WindowSpec window{};
};

/// Unrolls a GRU over the window (input at each step: all N series) and reads
/// the final state out linearly to Q * N values.
class GruModel final : public NeuralForecaster {
 public:
  GruModel(const GruConfig& config, Rng& rng);

  const GruConfig& config() const noexcept { return config_; }

  std::string kind() const override { return "rnn-gru"; }
  std::size_t nodes() const override { return config_.nodes; }
  WindowSpec window() const override { return config_.window; }
  nlohmann::json hyperparameters() const override;
  nlohmann::json to_json() const override;
  static GruModel from_json(const nlohmann::json& j);

  std::vector<Parameter*> parameters() override;
  Var forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) override;

 private:
  GruConfig config_;
  Parameter w_z_, u_z_, b_z_, w_r_, u_r_, b_r_, w_h_, u_h_, b_h_, out_w_, out_b_;
};

// ---- TCN ------------------------------------------------------------------

struct TcnConfig {
  std::size_t nodes = 0;
  std::size_t channels = 16;
  std::size_t kernel_size = 3;
  std::size_t levels = 3;  // dilations 1, 2, 4, ...
  double dropout = 0.3;
  WindowSpec window{};

  std::size_t dilation(std::size_t level) const { return std::size_t{1} << level; }
  /// Two causal convolutions per block: 1 + 2 (K - 1) sum of dilations.
  std::size_t receptive_field() const;
  void validate() const;
};

/// Residual blocks of two dilated causal convolutions over the N series as
/// input channels, with a linear readout of the last step.
class TcnModel final : public NeuralForecaster {
 public:
  TcnModel(const TcnConfig& config, Rng& rng);

  const TcnConfig& config() const noexcept { return config_; }

  std::string kind() const override { return "tcn"; }
  std::size_t nodes() const override { return config_.nodes; }
  WindowSpec window() const override { return config_.window; }
  nlohmann::json hyperparameters() const override;
  nlohmann::json to_json() const override;
  static TcnModel from_json(const nlohmann::json& j);

  std::vector<Parameter*> parameters() override;
  Var forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) override;

  /// Eval-mode readout at every step of x [N, T]: returns [Q, N, T].
  Tensor forward_sequence(const Tensor& x) const;

 private:
  struct Block {
    Parameter conv1_w, conv1_b, conv2_w, conv2_b;
    bool has_downsample = false;
    Parameter down_w, down_b;
  };

  Var run(Tape& tape, const Var& input, bool train, Rng& rng, bool sequence);

  TcnConfig config_;
  std::vector<Block> blocks_;
  Parameter out_w_, out_b_;
};

}  // namespace marketgraph
