#include "marketgraph/mtgnn.hpp"

#include <string>

#include "marketgraph/errors.hpp"
#include "marketgraph/ops.hpp"

namespace marketgraph {

std::size_t MtgnnConfig::receptive_field() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < num_layers; ++i) total += dilation(i);
  return 1 + (kernel_size - 1) * total;
}

void MtgnnConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("mtgnn: " + what);
  };
  window.validate();
  require(nodes >= 2, "needs at least 2 nodes");
  require(num_layers >= 1, "num_layers must be positive");
  require(conv_channels > 0 && residual_channels > 0 && skip_channels > 0 && end_channels > 0,
          "channel counts must be positive");
  require(embedding_dim > 0, "embedding_dim must be positive");
  require(kernel_size >= 1, "kernel_size must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(retain_ratio >= 0.0 && retain_ratio <= 1.0, "retain_ratio must lie in [0, 1]");
  require(saturation > 0.0, "saturation must be positive");
  require(top_k >= 1 && top_k < nodes, "top_k must lie in [1, nodes - 1]");
  if (window.input_steps < receptive_field()) {
    throw DomainError("mtgnn: input window P=" + std::to_string(window.input_steps) +
                      " is shorter than the receptive field " +
                      std::to_string(receptive_field()));
  }
}

nlohmann::json MtgnnConfig::to_json() const {
  return {{"nodes", nodes},
          {"num_layers", num_layers},
          {"conv_channels", conv_channels},
          {"residual_channels", residual_channels},
          {"skip_channels", skip_channels},
          {"end_channels", end_channels},
          {"dropout", dropout},
          {"gc_depth", gc_depth},
          {"embedding_dim", embedding_dim},
          {"retain_ratio", retain_ratio},
          {"saturation", saturation},
          {"top_k", top_k},
          {"kernel_size", kernel_size},
          {"input_steps", window.input_steps},
          {"horizon", window.horizon},
          {"residual", residual}};
}

MtgnnConfig MtgnnConfig::from_json(const nlohmann::json& j) {
  MtgnnConfig c;
  c.nodes = j.at("nodes").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.conv_channels = j.at("conv_channels").get<std::size_t>();
  c.residual_channels = j.at("residual_channels").get<std::size_t>();
  c.skip_channels = j.at("skip_channels").get<std::size_t>();
  c.end_channels = j.at("end_channels").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.gc_depth = j.at("gc_depth").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.retain_ratio = j.at("retain_ratio").get<double>();
  c.saturation = j.at("saturation").get<double>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.kernel_size = j.at("kernel_size").get<std::size_t>();
  c.window.input_steps = j.at("input_steps").get<std::size_t>();
  c.window.horizon = j.at("horizon").get<std::size_t>();
  c.residual = j.at("residual").get<bool>();
  return c;
}

Var mix_hop_propagate(const Var& x, const Var& norm_adj, double beta,
                      std::span<const Var> weights) {
  if (weights.empty()) throw DimensionError("mix_hop: need at least one weight (depth 0)");
  Var h = x;
  Var out = channel_mix(h, weights[0]);
  for (std::size_t k = 1; k < weights.size(); ++k) {
    h = add(scale(x, beta), scale(node_mix(h, norm_adj), 1.0 - beta));
    out = add(out, channel_mix(h, weights[k]));
  }
  return out;
}

Var mix_hop_graph_conv(const Var& h, const Var& a, std::size_t depth, double beta,
                       std::span<const Var> weights) {
  if (h.shape().size() != 2 || a.shape().size() != 2 || a.shape()[0] != a.shape()[1] ||
      a.shape()[0] != h.shape()[0]) {
    throw DimensionError("mix_hop_graph_conv: H " + shape_string(h.shape()) + " vs A " +
                         shape_string(a.shape()));
  }
  if (weights.size() != depth + 1) {
    throw DimensionError("mix_hop_graph_conv: expected " + std::to_string(depth + 1) +
                         " weights, got " + std::to_string(weights.size()));
  }
  const std::size_t n = h.shape()[0], c = h.shape()[1];
  std::vector<Var> wt;
  for (const Var& w : weights) {
    if (w.shape().size() != 2 || w.shape()[0] != c) {
      throw DimensionError("mix_hop_graph_conv: weight " + shape_string(w.shape()) +
                           " does not take " + std::to_string(c) + " input channels");
    }
    wt.push_back(transpose(w));
  }
  const std::size_t c_out = weights[0].shape()[1];
  Var x = reshape(transpose(h), {1, c, n, 1});
  Var y = mix_hop_propagate(x, row_normalize_with_self_loops(a), beta, wt);
  return transpose(reshape(y, {c_out, n}));
}

Var gated_temporal_conv(const Var& x, const Var& filter, const Var& gate, std::size_t dilation) {
  return mul(tanh(causal_conv1d(x, filter, dilation)), sigmoid(causal_conv1d(x, gate, dilation)));
}

MtgnnModel::MtgnnModel(const MtgnnConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::size_t n = c.nodes, d = c.embedding_dim, r = c.residual_channels,
                    cc = c.conv_channels, s = c.skip_channels, e = c.end_channels,
                    p = c.window.input_steps, q = c.window.horizon, k = c.kernel_size;
  emb_source_ = Parameter("graph.source_embedding", normal_init({n, d}, 1.0, rng));
  emb_target_ = Parameter("graph.target_embedding", normal_init({n, d}, 1.0, rng));
  proj_source_ = Parameter("graph.source_projection", uniform_init({d, d}, d, rng));
  proj_target_ = Parameter("graph.target_projection", uniform_init({d, d}, d, rng));
  start_w_ = Parameter("start.weight", uniform_init({r, 1}, 1, rng));
  start_b_ = Parameter("start.bias", Tensor({r}));
  skip0_w_ = Parameter("skip0.weight", uniform_init({s, 1, p}, p, rng));
  skip0_b_ = Parameter("skip0.bias", Tensor({s}));
  layers_.resize(c.num_layers);
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    Layer& l = layers_[i];
    l.filter_w = Parameter(pre + "filter.weight", uniform_init({cc, r, k}, r * k, rng));
    l.filter_b = Parameter(pre + "filter.bias", Tensor({cc}));
    l.gate_w = Parameter(pre + "gate.weight", uniform_init({cc, r, k}, r * k, rng));
    l.gate_b = Parameter(pre + "gate.bias", Tensor({cc}));
    l.skip_w = Parameter(pre + "skip.weight", uniform_init({s, cc, p}, cc * p, rng));
    l.skip_b = Parameter(pre + "skip.bias", Tensor({s}));
    for (std::size_t h = 0; h <= c.gc_depth; ++h) {
      l.gconv_w.emplace_back(pre + "gconv.hop" + std::to_string(h),
                             uniform_init({r, cc}, cc * (c.gc_depth + 1), rng));
    }
    l.gconv_b = Parameter(pre + "gconv.bias", Tensor({r}));
  }
  skip_end_w_ = Parameter("skip_end.weight", uniform_init({s, r, p}, r * p, rng));
  skip_end_b_ = Parameter("skip_end.bias", Tensor({s}));
  end1_w_ = Parameter("end1.weight", uniform_init({e, s}, s, rng));
  end1_b_ = Parameter("end1.bias", Tensor({e}));
  end2_w_ = Parameter("end2.weight", uniform_init({q, e}, e, rng));
  end2_b_ = Parameter("end2.bias", Tensor({q}));
}

std::vector<Parameter*> MtgnnModel::parameters() {
  std::vector<Parameter*> out{&emb_source_, &emb_target_, &proj_source_, &proj_target_,
                              &start_w_,    &start_b_,    &skip0_w_,     &skip0_b_};
  for (Layer& l : layers_) {
    for (Parameter* p : {&l.filter_w, &l.filter_b, &l.gate_w, &l.gate_b, &l.skip_w, &l.skip_b})
      out.push_back(p);
    for (Parameter& w : l.gconv_w) out.push_back(&w);
    out.push_back(&l.gconv_b);
  }
  for (Parameter* p : {&skip_end_w_, &skip_end_b_, &end1_w_, &end1_b_, &end2_w_, &end2_b_})
    out.push_back(p);
  return out;
}

Parameter& MtgnnModel::parameter(std::string_view name) {
  for (Parameter* p : parameters())
    if (p->name == name) return *p;
  throw DomainError("mtgnn: no parameter named '" + std::string(name) + "'");
}

Var MtgnnModel::run(Tape& tape, const Var& input, bool train, Rng& rng, bool sequence) {
  const auto& c = config_;
  // The skip convolutions span the full window: evaluated at the last step
  // only, or causally at every step in sequence mode.
  auto skip_conv = [&](const Var& x, Parameter& w, Parameter& b) {
    Var wv = tape.leaf(w);
    Var y = sequence ? causal_conv1d(x, wv, 1) : temporal_dense(x, wv);
    return bias_add(y, tape.leaf(b));
  };

  GraphLearnVars gv{tape.leaf(emb_source_), tape.leaf(emb_target_), tape.leaf(proj_source_),
                    tape.leaf(proj_target_)};
  Var adj = row_normalize_with_self_loops(learn_adjacency(gv, c.saturation, c.top_k));

  Var x = bias_add(channel_mix(input, tape.leaf(start_w_)), tape.leaf(start_b_));
  Var skip = skip_conv(dropout(input, c.dropout, train, rng), skip0_w_, skip0_b_);

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    const std::size_t dil = c.dilation(i);
    Var residual = x;
    Var filter = tanh(bias_add(causal_conv1d(x, tape.leaf(l.filter_w), dil), tape.leaf(l.filter_b)));
    Var gate = sigmoid(bias_add(causal_conv1d(x, tape.leaf(l.gate_w), dil), tape.leaf(l.gate_b)));
    x = dropout(mul(filter, gate), c.dropout, train, rng);
    skip = add(skip, skip_conv(x, l.skip_w, l.skip_b));
    std::vector<Var> w;
    for (Parameter& p : l.gconv_w) w.push_back(tape.leaf(p));
    x = bias_add(mix_hop_propagate(x, adj, c.retain_ratio, w), tape.leaf(l.gconv_b));
    if (c.residual) x = add(x, residual);
  }

  skip = add(skip, skip_conv(x, skip_end_w_, skip_end_b_));
  Var h = relu(skip);
  h = relu(bias_add(channel_mix(h, tape.leaf(end1_w_)), tape.leaf(end1_b_)));
  return bias_add(channel_mix(h, tape.leaf(end2_w_)), tape.leaf(end2_b_));
}

Var MtgnnModel::forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) {
  const std::size_t n = config_.nodes, p = config_.window.input_steps;
  if (inputs.rank() != 3 || inputs.dim(1) != n || inputs.dim(2) != p) {
    throw DimensionError("mtgnn: expected inputs [B, " + std::to_string(n) + ", " +
                         std::to_string(p) + "], got " + shape_string(inputs.shape()));
  }
  const std::size_t b = inputs.dim(0);
  Var x = tape.constant(inputs.reshaped({b, 1, n, p}));
  Var out = run(tape, x, train, rng, false);
  return reshape(out, {b, config_.window.horizon, n});
}

Tensor MtgnnModel::forward_sequence(const Tensor& x) const {
  const std::size_t n = config_.nodes;
  if (x.rank() != 2 || x.dim(0) != n || x.dim(1) < config_.window.input_steps) {
    throw DimensionError("mtgnn: forward_sequence needs [" + std::to_string(n) + ", T >= " +
                         std::to_string(config_.window.input_steps) + "], got " +
                         shape_string(x.shape()));
  }
  auto& self = const_cast<MtgnnModel&>(*this);
  Tape tape;
  Rng unused(0);
  Var in = tape.constant(x.reshaped({1, 1, n, x.dim(1)}));
  Var out = self.run(tape, in, false, unused, true);
  return out.value().reshaped({config_.window.horizon, n, x.dim(1)});
}

std::optional<Tensor> MtgnnModel::learned_adjacency() const {
  const NodeEmbeddings emb = embeddings();
  const GraphLearnParams gp = graph_params();
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < config_.nodes; ++i) labels.push_back(std::to_string(i));
  return learn_adjacency(emb, gp, std::move(labels)).weights();
}

NodeEmbeddings MtgnnModel::embeddings() const { return {emb_source_.value, emb_target_.value}; }

GraphLearnParams MtgnnModel::graph_params() const {
  return {proj_source_.value, proj_target_.value, config_.saturation, config_.top_k};
}

nlohmann::json MtgnnModel::to_json() const {
  return {{"config", config_.to_json()}, {"parameters", parameters_json()}};
}

MtgnnModel MtgnnModel::from_json(const nlohmann::json& j) {
  Rng rng(0);
  MtgnnModel model(MtgnnConfig::from_json(j.at("config")), rng);
  model.load_parameters_json(j.at("parameters"));
  return model;
}

}  // namespace marketgraph
