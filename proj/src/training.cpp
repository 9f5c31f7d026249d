#include "marketgraph/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "marketgraph/adam.hpp"
#include "marketgraph/baselines.hpp"
#include "marketgraph/csv.hpp"
#include "marketgraph/errors.hpp"
#include "marketgraph/metrics.hpp"
#include "marketgraph/mtgnn.hpp"
#include "marketgraph/ops.hpp"

namespace marketgraph {
namespace {

constexpr std::size_t kEvalBatch = 64;

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Stream tags for the seed shared by all randomness of one run.
enum Stream : std::uint64_t { kInit = 0, kShuffle = 1, kDropout = 2 };

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(l2_coefficient >= 0.0)) throw ConfigError("l2_coefficient must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (conv_channels == 0 || residual_channels == 0 || skip_channels == 0) {
    throw ConfigError("channel counts must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"loss", "l1"},
          {"dropout", dropout},
          {"gc_depth", gc_depth},
          {"conv_channels", conv_channels},
          {"residual_channels", residual_channels},
          {"skip_channels", skip_channels},
          {"l2_coefficient", l2_coefficient},
          {"learning_rate", learning_rate},
          {"optimizer", "adam"},
          {"seed", seed}};
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << csv::format_double(e.train_loss) << ','
        << (std::isnan(e.val_loss) ? std::string() : csv::format_double(e.val_loss)) << '\n';
  }
}

double mean_l1_loss(const Forecaster& model, const WindowSet& windows) {
  if (windows.empty()) throw DomainError("loss over an empty window set");
  const auto* neural = dynamic_cast<const NeuralForecaster*>(&model);
  double total = 0.0;
  std::size_t count = 0;
  if (neural) {
    auto& m = const_cast<NeuralForecaster&>(*neural);
    Rng unused(0);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < windows.size(); start += kEvalBatch) {
      idx.resize(std::min(kEvalBatch, windows.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      Tape tape;
      Var out = m.forward_batch(tape, windows.batch_inputs(idx), false, unused);
      const Tensor target = windows.batch_targets(idx);
      for (std::size_t i = 0; i < target.size(); ++i) total += std::abs(out.value()[i] - target[i]);
      count += target.size();
    }
  } else {
    for (std::size_t s = 0; s < windows.size(); ++s) {
      const Tensor pred = model.predict(windows.input(s));
      const Tensor target = windows.target(s);
      for (std::size_t i = 0; i < target.size(); ++i) total += std::abs(pred[i] - target[i]);
      count += target.size();
    }
  }
  return total / static_cast<double>(count);
}

TrainHistory train(NeuralForecaster& model, const WindowSet& train_windows,
                   const WindowSet& validation, const TrainConfig& config) {
  config.validate();
  if (train_windows.empty()) throw DomainError("training needs at least one window");
  const Rng root(config.seed);
  Rng shuffle_rng = root.split(kShuffle);
  Rng dropout_rng = root.split(kDropout);

  const std::vector<Parameter*> params = model.parameters();
  AdamState state;
  const AdamConfig adam{config.learning_rate};

  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best;
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      Var out = model.forward_batch(tape, train_windows.batch_inputs(idx), true, dropout_rng);
      Var loss = l1_loss(out, train_windows.batch_targets(idx));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged(epoch, "training loss became non-finite in epoch " +
                                          std::to_string(epoch));
      }
      tape.backward(loss);
      if (config.l2_coefficient > 0.0) {
        for (Parameter* p : params) {
          if (!p->requires_grad) continue;
          auto g = p->grad.values();
          auto v = p->value.values();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * config.l2_coefficient * v[i];
        }
      }
      adam_step(params, state, adam);
      loss_sum += value * static_cast<double>(len);
      seen += len;
    }

    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen),
                    std::numeric_limits<double>::quiet_NaN()};
    if (!validation.empty()) {
      rec.val_loss = mean_l1_loss(model, validation);
      if (!std::isfinite(rec.val_loss)) {
        throw TrainingDiverged(epoch, "validation loss became non-finite in epoch " +
                                          std::to_string(epoch));
      }
    }
    history.epochs.push_back(rec);
    if (validation.empty() || rec.val_loss < best_val) {
      best_val = rec.val_loss;
      history.best_epoch = epoch;
      best = model.snapshot();
    }
  }
  if (!best.empty()) model.restore(best);
  return history;
}

std::string to_string(MetricScale scale) {
  switch (scale) {
    case MetricScale::normalized: return "normalized";
    case MetricScale::log: return "log";
    case MetricScale::price: return "price";
  }
  return "?";
}

MetricScale parse_metric_scale(const std::string& text) {
  if (text == "normalized") return MetricScale::normalized;
  if (text == "log") return MetricScale::log;
  if (text == "price") return MetricScale::price;
  throw ConfigError("unknown metric scale '" + text + "' (normalized, log, price)");
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  for (const auto& s : series) {
    rows.push_back({{"series", s.name},
                    {"rse", opt(s.rse)},
                    {"rmse", opt(s.rmse)},
                    {"mae", opt(s.mae)},
                    {"mape", opt(s.mape)},
                    {"errors", s.errors}});
  }
  return {{"model", model},
          {"scale", marketgraph::to_string(scale)},
          {"hyperparameters", hyperparameters},
          {"series", rows}};
}

void PredictionTrace::write_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  csv::Row header{"date"};
  for (const auto& s : series) {
    header.push_back(s + "_actual");
    header.push_back(s + "_predicted");
  }
  out << csv::join(header) << '\n';
  for (std::size_t t = 0; t < dates.size(); ++t) {
    out << format_date(dates[t]);
    for (std::size_t i = 0; i < series.size(); ++i) {
      out << ',' << csv::format_double(actual.at(t, i)) << ','
          << csv::format_double(predicted.at(t, i));
    }
    out << '\n';
  }
}

Evaluation evaluate(const Forecaster& model, const WindowSet& test, const NormStats& stats,
                    const EvaluateOptions& options) {
  if (test.empty()) throw DomainError("evaluation needs at least one test window");
  const WindowSpec spec = model.window();
  if (test.spec().input_steps != spec.input_steps || test.spec().horizon != spec.horizon ||
      test.nodes() != model.nodes()) {
    throw DimensionError("test windows [" + std::to_string(test.nodes()) + " x " +
                         std::to_string(test.spec().input_steps) + "] do not match the " +
                         model.kind() + " model");
  }
  if (stats.columns.size() != test.nodes()) {
    throw DimensionError("normalization statistics cover " +
                         std::to_string(stats.columns.size()) + " series, windows " +
                         std::to_string(test.nodes()));
  }
  const std::size_t n = test.nodes(), steps = test.size();
  auto rescale = [&](std::size_t col, double z) {
    switch (options.scale) {
      case MetricScale::normalized: return z;
      case MetricScale::log: return stats.denormalize(col, z);
      case MetricScale::price: return to_price(stats, col, z, options.log_applied);
    }
    return z;
  };

  Evaluation ev;
  ev.trace.series = stats.columns;
  ev.trace.dates = test.target_dates();
  ev.trace.actual = Tensor({steps, n});
  ev.trace.predicted = Tensor({steps, n});
  std::vector<std::vector<double>> y(n), yhat(n);

  // Batched eval-mode forwards for neural models, per-window otherwise.
  const auto* neural = dynamic_cast<const NeuralForecaster*>(&model);
  Rng unused(0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < steps; start += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, steps - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor pred({idx.size(), n});  // first forecast step of each window
    if (neural) {
      Tape tape;
      Var out = const_cast<NeuralForecaster&>(*neural).forward_batch(
          tape, test.batch_inputs(idx), false, unused);
      const std::size_t q = spec.horizon;
      for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t i = 0; i < n; ++i) pred.at(b, i) = out.value()[b * q * n + i];
    } else {
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const Tensor p = model.predict(test.input(idx[b]));
        for (std::size_t i = 0; i < n; ++i) pred.at(b, i) = p.at(i, 0);
      }
    }
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Tensor target = test.target(idx[b]);
      for (std::size_t i = 0; i < n; ++i) {
        const double z_true = target.at(i, 0), z_pred = pred.at(b, i);
        y[i].push_back(rescale(i, z_true));
        yhat[i].push_back(rescale(i, z_pred));
        ev.trace.actual.at(idx[b], i) = to_price(stats, i, z_true, options.log_applied);
        ev.trace.predicted.at(idx[b], i) = to_price(stats, i, z_pred, options.log_applied);
      }
    }
  }

  ev.report.model = model.kind();
  ev.report.scale = options.scale;
  ev.report.hyperparameters = model.hyperparameters();
  for (std::size_t i = 0; i < n; ++i) {
    SeriesMetrics m;
    m.name = stats.columns[i];
    auto attempt = [&](const char* name, std::optional<double>& slot, auto fn) {
      try {
        slot = fn(y[i], yhat[i]);
      } catch (const std::exception& e) {
        m.errors.push_back(std::string(name) + ": " + e.what());
      }
    };
    attempt("rse", m.rse, [](const auto& a, const auto& b) { return rse(a, b); });
    attempt("rmse", m.rmse, [](const auto& a, const auto& b) { return rmse(a, b); });
    attempt("mae", m.mae, [](const auto& a, const auto& b) { return mae(a, b); });
    attempt("mape", m.mape, [](const auto& a, const auto& b) { return mape(a, b); });
    ev.report.series.push_back(std::move(m));
  }
  return ev;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"pipeline", marketgraph::to_json(pipeline)},
          {"train", train.to_json()},
          {"mtgnn",
           {{"num_layers", mtgnn.num_layers},
            {"end_channels", mtgnn.end_channels},
            {"embedding_dim", mtgnn.embedding_dim},
            {"retain_ratio", mtgnn.retain_ratio},
            {"saturation", mtgnn.saturation},
            {"top_k", mtgnn.top_k},
            {"kernel_size", mtgnn.kernel_size}}},
          {"baselines",
           {{"ar_order", baselines.ar_order},
            {"var_order", baselines.var_order},
            {"mlp_hidden", baselines.mlp_hidden},
            {"gru_hidden", baselines.gru_hidden},
            {"tcn_channels", baselines.tcn_channels},
            {"tcn_kernel", baselines.tcn_kernel},
            {"tcn_levels", baselines.tcn_levels}}},
          {"scale", marketgraph::to_string(scale)},
          {"models", models}};
}

const std::vector<std::string>& model_kinds() {
  static const std::vector<std::string> kinds{"ar", "var-mlp", "rnn-gru", "tcn", "mtgnn",
                                              "persistence"};
  return kinds;
}

FittedModel fit_model(const std::string& kind, const PreparedData& data,
                      const ExperimentConfig& config) {
  const TrainConfig& tc = config.train;
  tc.validate();
  const std::size_t n = data.columns.size();
  const WindowSpec window = config.pipeline.window;
  Rng init = Rng(tc.seed).split(kInit);
  FittedModel out;

  auto train_neural = [&](std::unique_ptr<NeuralForecaster> m) {
    out.history = train(*m, data.train, data.validation, tc);
    out.model = std::move(m);
  };

  if (kind == "ar") {
    out.model = std::make_unique<ArForecaster>(
        ArForecaster::fit(data.normalized.train, config.baselines.ar_order, window));
  } else if (kind == "persistence") {
    out.model = std::make_unique<PersistenceForecaster>(n, window);
  } else if (kind == "var-mlp") {
    auto m = std::make_unique<VarMlpModel>(fit_var(data.normalized.train, config.baselines.var_order),
                                           MlpSpec{config.baselines.mlp_hidden}, window, init);
    train_neural(std::move(m));
  } else if (kind == "rnn-gru") {
    train_neural(std::make_unique<GruModel>(GruConfig{n, config.baselines.gru_hidden, window}, init));
  } else if (kind == "tcn") {
    TcnConfig c;
    c.nodes = n;
    c.channels = config.baselines.tcn_channels;
    c.kernel_size = config.baselines.tcn_kernel;
    c.levels = config.baselines.tcn_levels;
    c.dropout = tc.dropout;
    c.window = window;
    train_neural(std::make_unique<TcnModel>(c, init));
  } else if (kind == "mtgnn") {
    const MtgnnSettings& s = config.mtgnn;
    MtgnnConfig c;
    c.nodes = n;
    c.num_layers = s.num_layers;
    c.conv_channels = tc.conv_channels;
    c.residual_channels = tc.residual_channels;
    c.skip_channels = tc.skip_channels;
    c.end_channels = s.end_channels;
    c.dropout = tc.dropout;
    c.gc_depth = tc.gc_depth;
    c.embedding_dim = s.embedding_dim;
    c.retain_ratio = s.retain_ratio;
    c.saturation = s.saturation;
    // Small panels cannot keep more neighbours than they have.
    c.top_k = std::min(s.top_k, n > 1 ? n - 1 : std::size_t{1});
    c.kernel_size = s.kernel_size;
    c.window = window;
    auto m = std::make_unique<MtgnnModel>(c, init);
    MtgnnModel* raw = m.get();
    train_neural(std::move(m));
    out.adjacency = AdjacencyMatrix(data.columns, *raw->learned_adjacency());
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  return out;
}

ComparisonTable run_comparison(const TimeSeriesFrame& frame, const ExperimentConfig& config,
                               const std::vector<std::string>& dropped_dates) {
  if (config.models.empty()) throw ConfigError("comparison needs at least one model");
  const PreparedData data = prepare(frame, config.pipeline, dropped_dates);
  ComparisonTable table;
  table.series = data.columns;
  table.scale = config.scale;
  table.config = config.to_json();
  const EvaluateOptions opts{config.scale, config.pipeline.log_transform};
  for (const std::string& kind : config.models) {
    ModelOutcome outcome;
    outcome.model = kind;
    try {
      FittedModel fitted = fit_model(kind, data, config);
      outcome.history = std::move(fitted.history);
      outcome.evaluation = evaluate(*fitted.model, data.test, data.stats, opts);
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    table.outcomes.push_back(std::move(outcome));
  }
  return table;
}

namespace {

const char* const kMetricNames[] = {"rse", "rmse", "mae", "mape"};

std::optional<double> metric_of(const SeriesMetrics& m, int which) {
  switch (which) {
    case 0: return m.rse;
    case 1: return m.rmse;
    case 2: return m.mae;
    default: return m.mape;
  }
}

// Indices of the best and second-best outcome for one (series, metric).
std::pair<std::optional<std::size_t>, std::optional<std::size_t>> rank_cell(
    const ComparisonTable& t, std::size_t series, int which) {
  std::vector<std::pair<double, std::size_t>> values;
  for (std::size_t k = 0; k < t.outcomes.size(); ++k) {
    const auto& ev = t.outcomes[k].evaluation;
    if (!ev) continue;
    if (auto v = metric_of(ev->report.series[series], which)) values.emplace_back(*v, k);
  }
  std::stable_sort(values.begin(), values.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::pair<std::optional<std::size_t>, std::optional<std::size_t>> out;
  if (!values.empty()) out.first = values[0].second;
  if (values.size() > 1) out.second = values[1].second;
  return out;
}

}  // namespace

nlohmann::json ComparisonTable::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& o : outcomes) {
    nlohmann::json m{{"model", o.model}};
    if (o.evaluation) m["report"] = o.evaluation->report.to_json();
    if (o.history) m["best_epoch"] = o.history->best_epoch;
    if (!o.error.empty()) m["error"] = o.error;
    models.push_back(std::move(m));
  }
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t s = 0; s < series.size(); ++s) {
    nlohmann::json row{{"series", series[s]}};
    for (int w = 0; w < 4; ++w) {
      nlohmann::json cell{{"values", nlohmann::json::object()}};
      for (const auto& o : outcomes) {
        if (!o.evaluation) continue;
        const auto v = metric_of(o.evaluation->report.series[s], w);
        cell["values"][o.model] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
      }
      const auto [best, second] = rank_cell(*this, s, w);
      cell["best"] = best ? nlohmann::json(outcomes[*best].model) : nlohmann::json(nullptr);
      cell["second_best"] =
          second ? nlohmann::json(outcomes[*second].model) : nlohmann::json(nullptr);
      row[kMetricNames[w]] = std::move(cell);
    }
    rows.push_back(std::move(row));
  }
  return {{"scale", marketgraph::to_string(scale)},
          {"config", config},
          {"models", models},
          {"series", rows}};
}

std::string ComparisonTable::to_markdown() const {
  std::ostringstream out;
  out << "Metrics on the " << marketgraph::to_string(scale)
      << " scale. **Bold** is best, <u>underlined</u> second best.\n\n";
  out << "| Series | Metric |";
  for (const auto& o : outcomes) out << ' ' << o.model << " |";
  out << "\n|---|---|";
  for (std::size_t k = 0; k < outcomes.size(); ++k) out << "---|";
  out << '\n';
  for (std::size_t s = 0; s < series.size(); ++s) {
    for (int w = 0; w < 4; ++w) {
      const auto [best, second] = rank_cell(*this, s, w);
      out << "| " << (w == 0 ? series[s] : "") << " | " << kMetricNames[w] << " |";
      for (std::size_t k = 0; k < outcomes.size(); ++k) {
        const auto& ev = outcomes[k].evaluation;
        const auto v = ev ? metric_of(ev->report.series[s], w) : std::nullopt;
        std::string text = "n/a";
        if (v) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.4f", *v);
          text = buf;
          if (best == k) text = "**" + text + "**";
          if (second == k) text = "<u>" + text + "</u>";
        }
        out << ' ' << text << " |";
      }
      out << '\n';
    }
  }
  for (const auto& o : outcomes)
    if (!o.error.empty()) out << "\n" << o.model << " failed: " << o.error << '\n';
  return out.str();
}

}  // namespace marketgraph
