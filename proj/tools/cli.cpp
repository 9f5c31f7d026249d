#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "marketgraph/checkpoint.hpp"
#include "marketgraph/csv.hpp"
#include "marketgraph/errors.hpp"
#include "marketgraph/metrics.hpp"
#include "marketgraph/svg.hpp"
#include "marketgraph/synthetic.hpp"

namespace marketgraph::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config parsing ---------------------------------------------------------

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
  }
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("MARKETGRAPH_SEED must be an unsigned integer, got '" + text + "'");
  }
  return v;
}

void apply_seed_override(RunConfig& cfg) {
  if (const char* env = std::getenv("MARKETGRAPH_SEED")) cfg.experiment.train.seed = parse_seed(env);
}

RebaseRule parse_rebase_flag(const std::string& text) {
  // COLUMN:YYYY-MM-DD[:DIVISOR]
  const auto first = text.find(':');
  if (first == std::string::npos) throw ConfigError("rebase rule must be COLUMN:DATE[:DIVISOR]");
  RebaseRule r;
  r.column = text.substr(0, first);
  const auto second = text.find(':', first + 1);
  try {
    r.cutoff = parse_date(text.substr(first + 1, second == std::string::npos ? std::string::npos
                                                                              : second - first - 1));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("rebase rule: ") + e.what());
  }
  if (second != std::string::npos && !csv::parse_double(text.substr(second + 1), r.divisor)) {
    throw ConfigError("rebase rule: bad divisor in '" + text + "'");
  }
  return r;
}

// ---- output helpers ---------------------------------------------------------

class Manifest {
 public:
  explicit Manifest(std::ostream& out) : out_(out) {}

  void text(const fs::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
    f.close();
    note(path);
  }
  void note(const fs::path& path) { out_ << "wrote " << path.string() << '\n'; }

 private:
  std::ostream& out_;
};

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::string file_stem(const std::string& label) {
  std::string out;
  for (unsigned char c : label) out += std::isalnum(c) || c == '-' ? static_cast<char>(c) : '_';
  return out;
}

LoadResult load_dataset(const fs::path& path) {
  if (path.empty()) throw ConfigError("no dataset path given");
  if (!fs::exists(path)) throw ConfigError("dataset '" + path.string() + "' does not exist");
  return load_csv(path);
}

void write_stats_csv(const fs::path& path, const std::vector<DescriptiveStats>& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "series,size,mean,median,std,min,max,skewness,kurtosis\n";
  for (const auto& s : stats) {
    out << csv::escape(s.name) << ',' << s.size;
    for (double v : {s.mean, s.median, s.std, s.min, s.max, s.skewness, s.kurtosis})
      out << ',' << csv::format_double(v);
    out << '\n';
  }
}

const std::vector<std::string>& group_members(const std::string& name) {
  static const std::vector<std::string> g7{"Canada", "France", "Germany", "Italy",
                                           "Japan",  "UK",     "US"};
  static const std::vector<std::string> mint{"Mexico", "Indonesia", "Nigeria", "Türkiye"};
  if (name == "G7") return g7;
  return mint;
}

// ---- commands ---------------------------------------------------------------

void cmd_analyze(const fs::path& csv_path, const fs::path& out_dir,
                 const std::vector<std::string>& rebase, std::ostream& out) {
  LoadResult loaded = load_dataset(csv_path);
  TimeSeriesFrame frame = loaded.frame;
  for (const auto& text : rebase) {
    const RebaseRule r = parse_rebase_flag(text);
    frame = adjust_rebased_series(frame, r.column, r.cutoff, r.divisor);
  }
  out << "rows " << frame.rows() << ", series " << frame.cols() << ", dropped "
      << loaded.dropped_dates.size() << '\n';
  prepare_dir(out_dir);
  Manifest manifest(out);
  write_stats_csv(out_dir / "descriptive_stats.csv", descriptive_stats(frame));
  manifest.note(out_dir / "descriptive_stats.csv");

  const LabeledMatrix spearman = spearman_matrix(frame);
  csv::write_matrix(out_dir / "spearman.csv", spearman.labels, spearman.values);
  manifest.note(out_dir / "spearman.csv");
  manifest.text(out_dir / "spearman.svg", svg::heatmap(spearman, "Spearman correlation"));

  const LabeledMatrix dtw = dtw_matrix(frame);
  csv::write_matrix(out_dir / "dtw.csv", dtw.labels, dtw.values);
  manifest.note(out_dir / "dtw.csv");
  manifest.text(out_dir / "dtw.svg", svg::heatmap(dtw, "DTW distance (z-scored series)"));
}

void cmd_train(const fs::path& config_path, const std::optional<fs::path>& out_override,
               std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  apply_seed_override(cfg);
  if (out_override) cfg.output_dir = *out_override;
  const LoadResult loaded = load_dataset(cfg.dataset);
  const auto& exp = cfg.experiment;
  const PreparedData data = prepare(loaded.frame, exp.pipeline, loaded.dropped_dates);
  FittedModel fitted = fit_model(cfg.model, data, exp);
  const Evaluation ev =
      evaluate(*fitted.model, data.test, data.stats, {exp.scale, exp.pipeline.log_transform});

  const fs::path dir = prepare_dir(cfg.output_dir);
  Manifest manifest(out);
  write_checkpoint(dir / "checkpoint.json", *fitted.model, PipelineState{exp.pipeline, data.stats});
  manifest.note(dir / "checkpoint.json");
  manifest.text(dir / "pipeline_report.json", data.report.dump(2) + "\n");
  if (fitted.history) {
    fitted.history->write_csv(dir / "history.csv");
    manifest.note(dir / "history.csv");
  }
  if (fitted.adjacency) {
    fitted.adjacency->write_csv(dir / "adjacency.csv");
    manifest.note(dir / "adjacency.csv");
    manifest.text(dir / "adjacency.svg",
                  svg::heatmap({fitted.adjacency->labels(), fitted.adjacency->weights()},
                               "Learned adjacency (row aggregates from column)"));
  }
  json metrics = ev.report.to_json();
  metrics["train"] = exp.train.to_json();
  metrics["split"] = "test";
  if (fitted.history) metrics["best_epoch"] = fitted.history->best_epoch;
  manifest.text(dir / "metrics.json", metrics.dump(2) + "\n");
  ev.trace.write_csv(dir / "test_trace.csv");
  manifest.note(dir / "test_trace.csv");
}

void cmd_compare(const fs::path& config_path, const std::optional<fs::path>& out_override,
                 std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  apply_seed_override(cfg);
  if (out_override) cfg.output_dir = *out_override;
  const LoadResult loaded = load_dataset(cfg.dataset);
  const ComparisonTable table =
      run_comparison(loaded.frame, cfg.experiment, loaded.dropped_dates);
  const fs::path dir = prepare_dir(cfg.output_dir);
  Manifest manifest(out);
  manifest.text(dir / "comparison.json", table.to_json().dump(2) + "\n");
  manifest.text(dir / "comparison.md", table.to_markdown());
  for (const auto& o : table.outcomes)
    if (!o.error.empty()) out << "model " << o.model << " failed: " << o.error << '\n';
}

void cmd_influence(const fs::path& adjacency_path, int hops, const std::string& group,
                   std::ostream& out) {
  if (hops != 1 && hops != 2) throw ConfigError("--hops must be 1 or 2");
  if (!fs::exists(adjacency_path)) {
    throw ConfigError("adjacency file '" + adjacency_path.string() + "' does not exist");
  }
  const AdjacencyMatrix a = AdjacencyMatrix::read_csv(adjacency_path);
  std::optional<std::vector<std::string>> members;
  if (group == "G7" || group == "MINT") {
    members = group_members(group);
  } else if (!group.empty() && group != "all") {
    members.emplace();
    for (auto& label : csv::split_line(group)) members->push_back(label);
  }
  InfluenceRanking ranking;
  try {
    ranking = rank_influence(a, hops, members);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  out << "rank,series,out_degree\n";
  for (std::size_t i = 0; i < ranking.size(); ++i)
    out << i + 1 << ',' << csv::escape(ranking[i].first) << ',' << ranking[i].second << '\n';
}

void cmd_forecast(const fs::path& checkpoint_path, const fs::path& csv_path,
                  std::optional<std::size_t> steps, const fs::path& out_dir, std::ostream& out) {
  if (!fs::exists(checkpoint_path)) {
    throw ConfigError("checkpoint '" + checkpoint_path.string() + "' does not exist");
  }
  const Checkpoint cp = read_checkpoint(checkpoint_path);
  if (!cp.pipeline) throw ConfigError("checkpoint carries no pipeline state");
  const LoadResult loaded = load_dataset(csv_path);
  const TimeSeriesFrame& raw = loaded.frame;
  const PipelineState& ps = *cp.pipeline;
  if (raw.columns() != ps.stats.columns) {
    throw ConfigError("CSV columns do not match the checkpoint's series");
  }
  const TimeSeriesFrame z = apply_transforms(raw, ps.config, ps.stats);
  const std::size_t p = cp.model->window().input_steps, n = raw.cols();
  const std::size_t available = raw.rows() > p ? raw.rows() - p : 0;
  const std::size_t count = steps.value_or(available);
  if (count > available) {
    throw ConfigError("--steps " + std::to_string(count) + " exceeds the " +
                      std::to_string(available) + " rows that have a full input window");
  }

  // Undo the rebasing so both columns are on the CSV's own scale.
  auto to_csv_scale = [&](std::size_t row, std::size_t col, double zval) {
    double v = to_price(ps.stats, col, zval, ps.config.log_transform);
    for (const RebaseRule& r : ps.config.rebase)
      if (r.column == raw.columns()[col] && raw.dates()[row] < r.cutoff) v *= r.divisor;
    return v;
  };

  PredictionTrace trace;
  trace.series = raw.columns();
  trace.actual = Tensor({count, n});
  trace.predicted = Tensor({count, n});
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t row = raw.rows() - count + k;
    Tensor window({n, p});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < p; ++t) window.at(i, t) = z(row - p + t, i);
    const Tensor pred = cp.model->predict(window);
    trace.dates.push_back(raw.dates()[row]);
    for (std::size_t i = 0; i < n; ++i) {
      trace.actual.at(k, i) = to_csv_scale(row, i, z(row, i));
      trace.predicted.at(k, i) = to_csv_scale(row, i, pred.at(i, 0));
    }
  }

  prepare_dir(out_dir);
  Manifest manifest(out);
  trace.write_csv(out_dir / "forecast.csv");
  manifest.note(out_dir / "forecast.csv");
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> actual(count), predicted(count);
    for (std::size_t k = 0; k < count; ++k) {
      actual[k] = trace.actual.at(k, i);
      predicted[k] = trace.predicted.at(k, i);
    }
    manifest.text(out_dir / ("forecast_" + file_stem(trace.series[i]) + ".svg"),
                  svg::line_chart(trace.dates,
                                  {{"actual", actual, "#1f77b4"},
                                   {"predicted", predicted, "#d62728"}},
                                  trace.series[i] + " (" + cp.model->kind() + ")"));
  }
}

void cmd_synthesize(const fs::path& path, const SyntheticSpec& spec,
                    const std::optional<fs::path>& coupling_path, std::ostream& out) {
  const SyntheticData data = coupled_var1(spec);
  if (path.has_parent_path()) prepare_dir(path.parent_path());
  Manifest manifest(out);
  write_csv(data.prices, path);
  manifest.note(path);
  if (coupling_path) {
    AdjacencyMatrix(data.prices.columns(), data.coupling).write_csv(*coupling_path);
    manifest.note(*coupling_path);
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  check_keys(j, {"dataset", "output_dir", "model", "models", "scale", "seed", "train", "split",
                 "window", "log_transform", "rebase", "mtgnn", "baselines"},
             "run config");
  RunConfig cfg;
  auto& exp = cfg.experiment;
  std::string dataset, output_dir, scale = "log";
  read(j, "dataset", dataset, "run config");
  read(j, "output_dir", output_dir, "run config");
  read(j, "model", cfg.model, "run config");
  read(j, "models", exp.models, "run config");
  read(j, "scale", scale, "run config");
  read(j, "seed", exp.train.seed, "run config");
  read(j, "log_transform", exp.pipeline.log_transform, "run config");
  if (!dataset.empty()) {
    cfg.dataset = fs::path(dataset).is_relative() && !base_dir.empty() ? base_dir / dataset
                                                                          : fs::path(dataset);
  }
  if (!output_dir.empty()) {
    cfg.output_dir = fs::path(output_dir).is_relative() && !base_dir.empty()
                         ? base_dir / output_dir
                         : fs::path(output_dir);
  }
  exp.scale = parse_metric_scale(scale);

  if (j.contains("train")) {
    const json& t = j.at("train");
    const std::string w = "train";
    check_keys(t, {"epochs", "batch_size", "dropout", "gc_depth", "conv_channels",
                   "residual_channels", "skip_channels", "l2_coefficient", "learning_rate"},
               w);
    auto& tc = exp.train;
    read(t, "epochs", tc.epochs, w);
    read(t, "batch_size", tc.batch_size, w);
    read(t, "dropout", tc.dropout, w);
    read(t, "gc_depth", tc.gc_depth, w);
    read(t, "conv_channels", tc.conv_channels, w);
    read(t, "residual_channels", tc.residual_channels, w);
    read(t, "skip_channels", tc.skip_channels, w);
    read(t, "l2_coefficient", tc.l2_coefficient, w);
    read(t, "learning_rate", tc.learning_rate, w);
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"train", "validation", "test"}, "split");
    read(s, "train", exp.pipeline.split.train, "split");
    read(s, "validation", exp.pipeline.split.validation, "split");
    read(s, "test", exp.pipeline.split.test, "split");
  }
  if (j.contains("window")) {
    const json& w = j.at("window");
    check_keys(w, {"input_steps", "horizon"}, "window");
    read(w, "input_steps", exp.pipeline.window.input_steps, "window");
    read(w, "horizon", exp.pipeline.window.horizon, "window");
  }
  if (j.contains("rebase")) {
    if (!j.at("rebase").is_array()) throw ConfigError("rebase must be an array");
    for (const json& r : j.at("rebase")) {
      check_keys(r, {"column", "cutoff", "divisor"}, "rebase rule");
      RebaseRule rule;
      std::string cutoff;
      read(r, "column", rule.column, "rebase rule");
      read(r, "cutoff", cutoff, "rebase rule");
      read(r, "divisor", rule.divisor, "rebase rule");
      try {
        rule.cutoff = parse_date(cutoff);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("rebase rule: ") + e.what());
      }
      exp.pipeline.rebase.push_back(rule);
    }
  }
  if (j.contains("mtgnn")) {
    const json& m = j.at("mtgnn");
    const std::string w = "mtgnn";
    check_keys(m, {"num_layers", "end_channels", "embedding_dim", "retain_ratio", "saturation",
                   "top_k", "kernel_size"},
               w);
    read(m, "num_layers", exp.mtgnn.num_layers, w);
    read(m, "end_channels", exp.mtgnn.end_channels, w);
    read(m, "embedding_dim", exp.mtgnn.embedding_dim, w);
    read(m, "retain_ratio", exp.mtgnn.retain_ratio, w);
    read(m, "saturation", exp.mtgnn.saturation, w);
    read(m, "top_k", exp.mtgnn.top_k, w);
    read(m, "kernel_size", exp.mtgnn.kernel_size, w);
  }
  if (j.contains("baselines")) {
    const json& b = j.at("baselines");
    const std::string w = "baselines";
    check_keys(b, {"ar_order", "var_order", "mlp_hidden", "gru_hidden", "tcn_channels",
                   "tcn_kernel", "tcn_levels"},
               w);
    read(b, "ar_order", exp.baselines.ar_order, w);
    read(b, "var_order", exp.baselines.var_order, w);
    read(b, "mlp_hidden", exp.baselines.mlp_hidden, w);
    read(b, "gru_hidden", exp.baselines.gru_hidden, w);
    read(b, "tcn_channels", exp.baselines.tcn_channels, w);
    read(b, "tcn_kernel", exp.baselines.tcn_kernel, w);
    read(b, "tcn_levels", exp.baselines.tcn_levels, w);
  }
  const auto& kinds = model_kinds();
  auto known = [&](const std::string& k) {
    return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
  };
  if (!known(cfg.model)) throw ConfigError("unknown model '" + cfg.model + "'");
  for (const auto& m : exp.models)
    if (!known(m)) throw ConfigError("unknown model '" + m + "' in models");
  exp.pipeline.validate();
  exp.train.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stock index graph learning and forecasting toolkit", "marketgraph"};
  app.require_subcommand(1);

  std::string csv_path, out_dir = "out", config_path, adjacency_path, group = "all",
                        checkpoint_path, synth_out, coupling_out;
  std::optional<std::string> out_override;
  std::vector<std::string> rebase;
  int hops = 1;
  std::optional<std::size_t> steps;
  SyntheticSpec synth;

  auto* analyze = app.add_subcommand("analyze", "Descriptive statistics, Spearman and DTW matrices");
  analyze->add_option("csv", csv_path, "Input CSV (date, series...)")->required();
  analyze->add_option("--out", out_dir, "Output directory");
  analyze->add_option("--rebase", rebase, "COLUMN:YYYY-MM-DD[:DIVISOR], repeatable");

  auto* train_cmd = app.add_subcommand("train", "Run the pipeline and train one model");
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--out", out_override, "Output directory (overrides config)");

  auto* compare = app.add_subcommand("compare", "Train and evaluate all configured models");
  compare->add_option("--config", config_path, "Run config JSON")->required();
  compare->add_option("--out", out_override, "Output directory (overrides config)");

  auto* influence = app.add_subcommand("influence", "Rank series by out-degree in a graph");
  influence->add_option("adjacency", adjacency_path, "Adjacency CSV")->required();
  influence->add_option("--hops", hops, "1 or 2");
  influence->add_option("--group", group, "G7, MINT, all, or a comma-separated label list");

  auto* forecast = app.add_subcommand("forecast", "Rolling one-step forecasts from a checkpoint");
  forecast->add_option("checkpoint", checkpoint_path, "Checkpoint JSON")->required();
  forecast->add_option("csv", csv_path, "Input CSV")->required();
  forecast->add_option("--steps", steps, "Number of trailing rows to forecast");
  forecast->add_option("--out", out_dir, "Output directory");

  auto* synthesize = app.add_subcommand("synthesize", "Write a synthetic coupled VAR(1) dataset");
  synthesize->add_option("--out", synth_out, "Output CSV")->required();
  synthesize->add_option("--nodes", synth.nodes, "Number of series");
  synthesize->add_option("--steps", synth.steps, "Number of daily rows");
  synthesize->add_option("--seed", synth.seed, "Generator seed");
  synthesize->add_option("--coupling", synth.coupling, "Weight of the lagged neighbour term");
  synthesize->add_option("--coupling-out", coupling_out, "Also write the true coupling matrix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    const std::optional<fs::path> override_path =
        out_override ? std::optional<fs::path>(*out_override) : std::nullopt;
    if (*analyze) {
      cmd_analyze(csv_path, out_dir, rebase, out);
    } else if (*train_cmd) {
      cmd_train(config_path, override_path, out);
    } else if (*compare) {
      cmd_compare(config_path, override_path, out);
    } else if (*influence) {
      cmd_influence(adjacency_path, hops, group, out);
    } else if (*forecast) {
      cmd_forecast(checkpoint_path, csv_path, steps, out_dir, out);
    } else if (*synthesize) {
      cmd_synthesize(synth_out, synth,
                     coupling_out.empty() ? std::nullopt : std::optional<fs::path>(coupling_out),
                     out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace marketgraph::cli
