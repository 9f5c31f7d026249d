#include "marketgraph/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "marketgraph/errors.hpp"
#include "marketgraph/ops.hpp"
#include "marketgraph/training.hpp"

namespace marketgraph {
namespace {

// Least squares X b = Y through column-pivoted QR; rank deficiency is an error.
Eigen::MatrixXd solve_least_squares(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw SingularSystemError(std::string(what) + ": design matrix has rank " +
                              std::to_string(qr.rank()) + " < " + std::to_string(x.cols()));
  }
  return qr.solve(y);
}

void check_batch(const Tensor& inputs, std::size_t n, std::size_t p, const std::string& kind) {
  if (inputs.rank() != 3 || inputs.dim(1) != n || inputs.dim(2) != p) {
    throw DimensionError(kind + ": expected inputs [B, " + std::to_string(n) + ", " +
                         std::to_string(p) + "], got " + shape_string(inputs.shape()));
  }
}

nlohmann::json window_json(const WindowSpec& w) {
  return {{"input_steps", w.input_steps}, {"horizon", w.horizon}};
}

WindowSpec window_from_json(const nlohmann::json& j) {
  WindowSpec w{j.at("input_steps").get<std::size_t>(), j.at("horizon").get<std::size_t>()};
  w.validate();
  return w;
}

}  // namespace

// ---- AR ---------------------------------------------------------------------

ArModel fit_ar(std::span<const double> series, std::size_t order) {
  if (order == 0) throw ConfigError("ar: order must be positive");
  if (series.size() <= order + 1) {
    throw DimensionError("ar: series of length " + std::to_string(series.size()) +
                         " is too short for order " + std::to_string(order));
  }
  ArModel model{order, 0.0, std::vector<double>(order, 0.0)};
  if (std::all_of(series.begin(), series.end(), [&](double v) { return v == series[0]; })) {
    model.intercept = series[0];
    return model;
  }
  const std::size_t rows = series.size() - order;
  Eigen::MatrixXd x(rows, order + 1);
  Eigen::VectorXd y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r + order;
    x(r, 0) = 1.0;
    for (std::size_t i = 1; i <= order; ++i) x(r, i) = series[t - i];
    y(r) = series[t];
  }
  const Eigen::VectorXd beta = solve_least_squares(x, y, "ar");
  model.intercept = beta(0);
  for (std::size_t i = 0; i < order; ++i) model.coefficients[i] = beta(i + 1);
  return model;
}

std::vector<double> predict_ar(const ArModel& model, std::span<const double> history,
                               std::size_t steps) {
  if (history.size() < model.order) {
    throw DimensionError("ar: history of " + std::to_string(history.size()) +
                         " values is shorter than the order " + std::to_string(model.order));
  }
  std::vector<double> buf(history.end() - model.order, history.end());
  std::vector<double> out;
  out.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    double v = model.intercept;
    for (std::size_t i = 1; i <= model.order; ++i)
      v += model.coefficients[i - 1] * buf[buf.size() - i];
    out.push_back(v);
    buf.push_back(v);
  }
  return out;
}

ArForecaster::ArForecaster(std::vector<ArModel> models, WindowSpec window)
    : models_(std::move(models)), window_(window) {
  window_.validate();
  for (const auto& m : models_) {
    if (m.order > window_.input_steps) {
      throw ConfigError("ar: order exceeds the input window");
    }
  }
}

ArForecaster ArForecaster::fit(const TimeSeriesFrame& frame, std::size_t order,
                               WindowSpec window) {
  std::vector<ArModel> models;
  for (std::size_t c = 0; c < frame.cols(); ++c) models.push_back(fit_ar(frame.column(c), order));
  return ArForecaster(std::move(models), window);
}

Tensor ArForecaster::predict(const Tensor& window) const {
  check_window(window);
  const std::size_t p = window_.input_steps, q = window_.horizon;
  Tensor out({models_.size(), q});
  for (std::size_t i = 0; i < models_.size(); ++i) {
    std::vector<double> history(p);
    for (std::size_t t = 0; t < p; ++t) history[t] = window.at(i, t);
    const auto f = predict_ar(models_[i], history, q);
    for (std::size_t h = 0; h < q; ++h) out.at(i, h) = f[h];
  }
  return out;
}

nlohmann::json ArForecaster::hyperparameters() const {
  return {{"order", models_.empty() ? 0 : models_.front().order}};
}

nlohmann::json ArForecaster::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : models_) {
    models.push_back(
        {{"order", m.order}, {"intercept", m.intercept}, {"coefficients", m.coefficients}});
  }
  return {{"window", window_json(window_)}, {"models", models}};
}

ArForecaster ArForecaster::from_json(const nlohmann::json& j) {
  std::vector<ArModel> models;
  for (const auto& m : j.at("models")) {
    ArModel a{m.at("order").get<std::size_t>(), m.at("intercept").get<double>(),
              m.at("coefficients").get<std::vector<double>>()};
    if (a.coefficients.size() != a.order) throw ConfigError("ar checkpoint: coefficient count");
    models.push_back(std::move(a));
  }
  return ArForecaster(std::move(models), window_from_json(j.at("window")));
}

// ---- VAR + MLP --------------------------------------------------------------

std::vector<double> VarModel::step(const Tensor& history) const {
  const std::size_t n = nodes();
  if (history.rank() != 2 || history.dim(0) != n || history.dim(1) < order) {
    throw DimensionError("var: history " + shape_string(history.shape()) + " for order " +
                         std::to_string(order));
  }
  const std::size_t len = history.dim(1);
  std::vector<double> out(intercept);
  for (std::size_t l = 1; l <= order; ++l) {
    const Tensor& a = coefficients[l - 1];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i] += a.at(i, j) * history.at(j, len - l);
  }
  return out;
}

VarModel fit_var(const TimeSeriesFrame& frame, std::size_t order) {
  if (order == 0) throw ConfigError("var: order must be positive");
  const std::size_t n = frame.cols(), t_total = frame.rows();
  if (t_total <= order || t_total - order < 1 + n * order) {
    throw DimensionError("var: " + std::to_string(t_total) + " rows are too few for order " +
                         std::to_string(order) + " over " + std::to_string(n) + " series");
  }
  const std::size_t rows = t_total - order;
  Eigen::MatrixXd x(rows, 1 + n * order);
  Eigen::MatrixXd y(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r + order;
    x(r, 0) = 1.0;
    for (std::size_t l = 1; l <= order; ++l)
      for (std::size_t j = 0; j < n; ++j) x(r, 1 + (l - 1) * n + j) = frame(t - l, j);
    for (std::size_t i = 0; i < n; ++i) y(r, i) = frame(t, i);
  }
  const Eigen::MatrixXd beta = solve_least_squares(x, y, "var");
  VarModel model;
  model.order = order;
  model.intercept.resize(n);
  for (std::size_t i = 0; i < n; ++i) model.intercept[i] = beta(0, i);
  for (std::size_t l = 1; l <= order; ++l) {
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a.at(i, j) = beta(1 + (l - 1) * n + j, i);
    model.coefficients.push_back(std::move(a));
  }
  return model;
}

VarMlpModel::VarMlpModel(VarModel var, MlpSpec mlp, WindowSpec window, Rng& rng)
    : var_(std::move(var)), mlp_(mlp), window_(window) {
  window_.validate();
  if (var_.order == 0 || var_.coefficients.size() != var_.order) {
    throw ConfigError("var-mlp: inconsistent VAR model");
  }
  if (window_.input_steps < var_.order) throw ConfigError("var-mlp: window shorter than order");
  if (mlp_.hidden == 0) throw ConfigError("var-mlp: hidden size must be positive");
  const std::size_t in = var_.nodes() * var_.order, out = window_.horizon * var_.nodes();
  w1_ = Parameter("mlp.hidden.weight", uniform_init({in, mlp_.hidden}, in, rng));
  b1_ = Parameter("mlp.hidden.bias", Tensor({mlp_.hidden}));
  w2_ = Parameter("mlp.out.weight", Tensor({mlp_.hidden, out}));
  b2_ = Parameter("mlp.out.bias", Tensor({out}));
}

Tensor VarMlpModel::var_forecast(const Tensor& window) const {
  check_window(window);
  const std::size_t n = nodes(), p = window_.input_steps, q = window_.horizon;
  Tensor hist({n, p + q});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < p; ++t) hist.at(i, t) = window.at(i, t);
  Tensor out({n, q});
  for (std::size_t h = 0; h < q; ++h) {
    Tensor view({n, p + h});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < p + h; ++t) view.at(i, t) = hist.at(i, t);
    const auto next = var_.step(view);
    for (std::size_t i = 0; i < n; ++i) {
      hist.at(i, p + h) = next[i];
      out.at(i, h) = next[i];
    }
  }
  return out;
}

std::vector<Parameter*> VarMlpModel::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

Var VarMlpModel::forward_batch(Tape& tape, const Tensor& inputs, bool, Rng&) {
  const std::size_t n = nodes(), p = window_.input_steps, q = window_.horizon,
                    order = var_.order;
  check_batch(inputs, n, p, kind());
  const std::size_t b = inputs.dim(0);
  Tensor lags({b, n * order});
  Tensor linear({b, q * n});
  for (std::size_t s = 0; s < b; ++s) {
    Tensor w({n, p});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < p; ++t) w.at(i, t) = inputs[(s * n + i) * p + t];
    for (std::size_t l = 1; l <= order; ++l)
      for (std::size_t j = 0; j < n; ++j) lags.at(s, (l - 1) * n + j) = w.at(j, p - l);
    const Tensor f = var_forecast(w);
    for (std::size_t h = 0; h < q; ++h)
      for (std::size_t i = 0; i < n; ++i) linear.at(s, h * n + i) = f.at(i, h);
  }
  Var hidden = tanh(bias_add(matmul(tape.constant(std::move(lags)), tape.leaf(w1_)),
                             tape.leaf(b1_)));
  Var correction = bias_add(matmul(hidden, tape.leaf(w2_)), tape.leaf(b2_));
  return reshape(add(tape.constant(std::move(linear)), correction), {b, q, n});
}

nlohmann::json VarMlpModel::hyperparameters() const {
  return {{"var_order", var_.order}, {"mlp_hidden", mlp_.hidden}, {"mlp_activation", "tanh"}};
}

nlohmann::json VarMlpModel::to_json() const {
  nlohmann::json coef = nlohmann::json::array();
  for (const Tensor& a : var_.coefficients) coef.push_back(tensor_to_json(a));
  return {{"window", window_json(window_)},
          {"var", {{"order", var_.order}, {"intercept", var_.intercept}, {"coefficients", coef}}},
          {"mlp_hidden", mlp_.hidden},
          {"parameters", parameters_json()}};
}

VarMlpModel VarMlpModel::from_json(const nlohmann::json& j) {
  VarModel var;
  const auto& v = j.at("var");
  var.order = v.at("order").get<std::size_t>();
  var.intercept = v.at("intercept").get<std::vector<double>>();
  for (const auto& a : v.at("coefficients")) var.coefficients.push_back(tensor_from_json(a));
  for (const Tensor& a : var.coefficients) {
    if (a.rank() != 2 || a.dim(0) != var.nodes() || a.dim(1) != var.nodes()) {
      throw ConfigError("var-mlp checkpoint: coefficient shape");
    }
  }
  Rng rng(0);
  VarMlpModel model(std::move(var), MlpSpec{j.at("mlp_hidden").get<std::size_t>()},
                    window_from_json(j.at("window")), rng);
  model.load_parameters_json(j.at("parameters"));
  return model;
}

VarMlpModel fit_var_mlp(const TimeSeriesFrame& frame, std::size_t var_order, MlpSpec mlp,
                        WindowSpec window, const TrainConfig& train_config) {
  Rng rng(train_config.seed);
  Rng init = rng.split(0);
  VarMlpModel model(fit_var(frame, var_order), mlp, window, init);
  if (train_config.epochs > 0) {
    const WindowSet windows = make_windows(frame, window);
    train(model, windows, WindowSet{}, train_config);
  }
  return model;
}

// ---- GRU --------------------------------------------------------------------

Var gru_cell(const Var& x, const Var& h, const GruCellVars& p) {
  if (x.shape().size() != 2 || h.shape().size() != 2 || x.shape()[0] != h.shape()[0]) {
    throw DimensionError("gru_cell: x " + shape_string(x.shape()) + " vs h " +
                         shape_string(h.shape()));
  }
  auto affine = [&](const Var& w, const Var& u, const Var& b, const Var& state) {
    return bias_add(add(matmul(x, w), matmul(state, u)), b);
  };
  Var z = sigmoid(affine(p.w_z, p.u_z, p.b_z, h));
  Var r = sigmoid(affine(p.w_r, p.u_r, p.b_r, h));
  Var candidate = tanh(affine(p.w_h, p.u_h, p.b_h, mul(r, h)));
  // (1 - z) h + z c, written as h + z (c - h).
  return add(h, mul(z, sub(candidate, h)));
}

GruModel::GruModel(const GruConfig& config, Rng& rng) : config_(config) {
  config_.window.validate();
  if (config_.nodes == 0 || config_.hidden == 0) throw ConfigError("rnn-gru: empty dimensions");
  const std::size_t n = config_.nodes, h = config_.hidden, out = config_.window.horizon * n;
  auto gate = [&](const std::string& g, Parameter& w, Parameter& u, Parameter& b) {
    w = Parameter("gru." + g + ".input", uniform_init({n, h}, h, rng));
    u = Parameter("gru." + g + ".recurrent", uniform_init({h, h}, h, rng));
    b = Parameter("gru." + g + ".bias", Tensor({h}));
  };
  gate("update", w_z_, u_z_, b_z_);
  gate("reset", w_r_, u_r_, b_r_);
  gate("candidate", w_h_, u_h_, b_h_);
  out_w_ = Parameter("readout.weight", uniform_init({h, out}, h, rng));
  out_b_ = Parameter("readout.bias", Tensor({out}));
}

std::vector<Parameter*> GruModel::parameters() {
  return {&w_z_, &u_z_, &b_z_, &w_r_, &u_r_, &b_r_, &w_h_, &u_h_, &b_h_, &out_w_, &out_b_};
}

Var GruModel::forward_batch(Tape& tape, const Tensor& inputs, bool, Rng&) {
  const std::size_t n = config_.nodes, p = config_.window.input_steps,
                    q = config_.window.horizon;
  check_batch(inputs, n, p, kind());
  const std::size_t b = inputs.dim(0);
  GruCellVars v{tape.leaf(w_z_), tape.leaf(u_z_), tape.leaf(b_z_),
                tape.leaf(w_r_), tape.leaf(u_r_), tape.leaf(b_r_),
                tape.leaf(w_h_), tape.leaf(u_h_), tape.leaf(b_h_)};
  Var h = tape.constant(Tensor({b, config_.hidden}));
  for (std::size_t t = 0; t < p; ++t) {
    Tensor xt({b, n});
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t i = 0; i < n; ++i) xt.at(s, i) = inputs[(s * n + i) * p + t];
    h = gru_cell(tape.constant(std::move(xt)), h, v);
  }
  Var out = bias_add(matmul(h, tape.leaf(out_w_)), tape.leaf(out_b_));
  return reshape(out, {b, q, n});
}

nlohmann::json GruModel::hyperparameters() const {
  return {{"hidden", config_.hidden}, {"update_convention", "(1-z)*h + z*candidate"}};
}

nlohmann::json GruModel::to_json() const {
  return {{"nodes", config_.nodes},
          {"hidden", config_.hidden},
          {"window", window_json(config_.window)},
          {"parameters", parameters_json()}};
}

GruModel GruModel::from_json(const nlohmann::json& j) {
  GruConfig c{j.at("nodes").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
              window_from_json(j.at("window"))};
  Rng rng(0);
  GruModel model(c, rng);
  model.load_parameters_json(j.at("parameters"));
  return model;
}

// ---- TCN --------------------------------------------------------------------

std::size_t TcnConfig::receptive_field() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < levels; ++i) total += dilation(i);
  return 1 + 2 * (kernel_size - 1) * total;
}

void TcnConfig::validate() const {
  window.validate();
  if (nodes == 0 || channels == 0 || kernel_size == 0 || levels == 0) {
    throw ConfigError("tcn: dimensions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("tcn: dropout must lie in [0, 1)");
  if (window.input_steps < receptive_field()) {
    throw DomainError("tcn: input window P=" + std::to_string(window.input_steps) +
                      " is shorter than the receptive field " +
                      std::to_string(receptive_field()));
  }
}

TcnModel::TcnModel(const TcnConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels, k = config_.kernel_size;
  blocks_.resize(config_.levels);
  for (std::size_t i = 0; i < config_.levels; ++i) {
    const std::size_t in = i == 0 ? config_.nodes : c;
    const std::string pre = "block" + std::to_string(i) + ".";
    Block& b = blocks_[i];
    b.conv1_w = Parameter(pre + "conv1.weight", uniform_init({c, in, k}, in * k, rng));
    b.conv1_b = Parameter(pre + "conv1.bias", Tensor({c}));
    b.conv2_w = Parameter(pre + "conv2.weight", uniform_init({c, c, k}, c * k, rng));
    b.conv2_b = Parameter(pre + "conv2.bias", Tensor({c}));
    b.has_downsample = in != c;
    if (b.has_downsample) {
      b.down_w = Parameter(pre + "downsample.weight", uniform_init({c, in}, in, rng));
      b.down_b = Parameter(pre + "downsample.bias", Tensor({c}));
    }
  }
  const std::size_t out = config_.window.horizon * config_.nodes;
  out_w_ = Parameter("readout.weight", uniform_init({out, c, 1}, c, rng));
  out_b_ = Parameter("readout.bias", Tensor({out}));
}

std::vector<Parameter*> TcnModel::parameters() {
  std::vector<Parameter*> out;
  for (Block& b : blocks_) {
    for (Parameter* p : {&b.conv1_w, &b.conv1_b, &b.conv2_w, &b.conv2_b}) out.push_back(p);
    if (b.has_downsample) {
      out.push_back(&b.down_w);
      out.push_back(&b.down_b);
    }
  }
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

Var TcnModel::run(Tape& tape, const Var& input, bool train, Rng& rng, bool sequence) {
  Var h = input;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& b = blocks_[i];
    const std::size_t d = config_.dilation(i);
    Var y = relu(bias_add(causal_conv1d(h, tape.leaf(b.conv1_w), d), tape.leaf(b.conv1_b)));
    y = dropout(y, config_.dropout, train, rng);
    y = relu(bias_add(causal_conv1d(y, tape.leaf(b.conv2_w), d), tape.leaf(b.conv2_b)));
    y = dropout(y, config_.dropout, train, rng);
    Var res = b.has_downsample
                  ? bias_add(channel_mix(h, tape.leaf(b.down_w)), tape.leaf(b.down_b))
                  : h;
    h = relu(add(y, res));
  }
  Var w = tape.leaf(out_w_);
  Var y = sequence ? causal_conv1d(h, w, 1) : temporal_dense(h, w);
  return bias_add(y, tape.leaf(out_b_));
}

Var TcnModel::forward_batch(Tape& tape, const Tensor& inputs, bool train, Rng& rng) {
  const std::size_t n = config_.nodes, p = config_.window.input_steps;
  check_batch(inputs, n, p, kind());
  const std::size_t b = inputs.dim(0);
  // Series act as input channels over a single spatial position.
  Var x = tape.constant(inputs.reshaped({b, n, 1, p}));
  return reshape(run(tape, x, train, rng, false), {b, config_.window.horizon, n});
}

Tensor TcnModel::forward_sequence(const Tensor& x) const {
  const std::size_t n = config_.nodes;
  if (x.rank() != 2 || x.dim(0) != n || x.dim(1) == 0) {
    throw DimensionError("tcn: forward_sequence needs [" + std::to_string(n) + ", T], got " +
                         shape_string(x.shape()));
  }
  auto& self = const_cast<TcnModel&>(*this);
  Tape tape;
  Rng unused(0);
  Var in = tape.constant(x.reshaped({1, n, 1, x.dim(1)}));
  Var out = self.run(tape, in, false, unused, true);
  return out.value().reshaped({config_.window.horizon, n, x.dim(1)});
}

nlohmann::json TcnModel::hyperparameters() const {
  return {{"channels", config_.channels},
          {"kernel_size", config_.kernel_size},
          {"levels", config_.levels},
          {"dropout", config_.dropout},
          {"receptive_field", config_.receptive_field()}};
}

nlohmann::json TcnModel::to_json() const {
  return {{"nodes", config_.nodes},
          {"channels", config_.channels},
          {"kernel_size", config_.kernel_size},
          {"levels", config_.levels},
          {"dropout", config_.dropout},
          {"window", window_json(config_.window)},
          {"parameters", parameters_json()}};
}

TcnModel TcnModel::from_json(const nlohmann::json& j) {
  TcnConfig c;
  c.nodes = j.at("nodes").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.kernel_size = j.at("kernel_size").get<std::size_t>();
  c.levels = j.at("levels").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.window = window_from_json(j.at("window"));
  Rng rng(0);
  TcnModel model(c, rng);
  model.load_parameters_json(j.at("parameters"));
  return model;
}

}  // namespace marketgraph
