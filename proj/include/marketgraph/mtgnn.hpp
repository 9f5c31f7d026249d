#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "marketgraph/forecaster.hpp"
#include "marketgraph/graph_learning.hpp"

namespace marketgraph {

struct MtgnnConfig {
  std::size_t nodes = 0;
  std::size_t num_layers = 3;
  std::size_t conv_channels = 16;
  std::size_t residual_channels = 16;
  std::size_t skip_channels = 32;
  std::size_t end_channels = 64;
  double dropout = 0.3;
  std::size_t gc_depth = 2;
  std::size_t embedding_dim = 40;
  double retain_ratio = 0.05;  // beta
  double saturation = 3.0;     // alpha in the graph learner
  std::size_t top_k = 5;
  std::size_t kernel_size = 3;
  WindowSpec window{};
  /// Residual connections around each temporal + graph block.
  bool residual = true;

  /// Dilation of layer i is 2^i.
  std::size_t dilation(std::size_t layer) const { return std::size_t{1} << layer; }
  /// 1 + (K-1) * sum of dilations.
  std::size_t receptive_field() const;
  void validate() const;

  nlohmann::json to_json() const;
  static MtgnnConfig from_json(const nlohmann::json& j);
};

/// Mix-hop propagation on the batched layout: x [B, C, N, T], `norm_adj` the
/// row-normalized (A + I) [N, N], one weight [C_out, C] per hop 0..depth.
/// H0 = x, Hk = beta*x + (1-beta)*adj*H(k-1), output = sum_k W_k Hk.
Var mix_hop_propagate(const Var& x, const Var& norm_adj, double beta,
                      std::span<const Var> weights);

/// Node-major form: h [N, C], raw adjacency a [N, N], weights[k] [C, C'] -> [N, C'].
Var mix_hop_graph_conv(const Var& h, const Var& a, std::size_t depth, double beta,
                       std::span<const Var> weights);

/// tanh(conv(x, filter)) * sigmoid(conv(x, gate)) with causal dilated
/// convolutions; x is [C, T] or [B, C, N, T], kernels [C', C, K].
Var gated_temporal_conv(const Var& x, const Var& filter, const Var& gate, std::size_t dilation);

class MtgnnModel final : public NeuralForecaster {
 public:
  MtgnnModel(const MtgnnConfig& config, Rng& rng);

  const MtgnnConfig& config() const noexcept { return config_; }

  std::string kind() const override { return "mtgnn"; }
  std::size_t nodes() const override { return config_.nodes; }
  WindowSpec window() const override { return config_.window; }
  nlohmann::json hyperparameters() const override { return config_.to_json(); }
  nlohmann::json to_json() const override;
  static MtgnnModel from_json(const nlohmann::json& j);

  std::vector<Parameter*> parameters() override;
  Var forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) override;

  /// Eval-mode head output at every step of an input x [N, T] with T >= P:
  /// returns [Q, N, T], where column t only depends on x[:, <= t]. With
  /// T == P the last column equals predict(x); for longer inputs the early
  /// layers see real history instead of zero padding, so values differ.
  Tensor forward_sequence(const Tensor& x) const;

  /// Current sparsified graph [N, N] (row i aggregates from column j).
  std::optional<Tensor> learned_adjacency() const override;
  NodeEmbeddings embeddings() const;
  GraphLearnParams graph_params() const;

  /// Parameter access by name, for tests and tooling.
  Parameter& parameter(std::string_view name);

 private:
  struct Layer {
    Parameter filter_w, filter_b, gate_w, gate_b, skip_w, skip_b;
    std::vector<Parameter> gconv_w;
    Parameter gconv_b;
  };

  Var run(Tape& tape, const Var& input, bool train, Rng& rng, bool sequence);

  MtgnnConfig config_;
  Parameter emb_source_, emb_target_, proj_source_, proj_target_;
  Parameter start_w_, start_b_, skip0_w_, skip0_b_;
  std::vector<Layer> layers_;
  Parameter skip_end_w_, skip_end_b_, end1_w_, end1_b_, end2_w_, end2_b_;
};

}  // namespace marketgraph
