#include "marketgraph/pipeline.hpp"

#include <cmath>

#include "marketgraph/errors.hpp"

namespace marketgraph {
namespace {

TimeSeriesFrame adjust_and_log(const TimeSeriesFrame& frame, const PipelineConfig& config,
                               nlohmann::json* stages) {
  auto record = [&](const char* name, const TimeSeriesFrame& f) {
    if (stages) stages->push_back({{"stage", name}, {"rows", f.rows()}, {"hash", frame_hash(f)}});
  };
  record("ingest", frame);
  TimeSeriesFrame out = frame;
  for (const RebaseRule& r : config.rebase)
    out = adjust_rebased_series(out, r.column, r.cutoff, r.divisor);
  record("adjust", out);
  if (config.log_transform) out = log_transform(out);
  record("log", out);
  return out;
}

nlohmann::json range_json(std::size_t begin, std::size_t end, const TimeSeriesFrame& part) {
  return {{"begin", begin},
          {"end", end},
          {"first_date", format_date(part.dates().front())},
          {"last_date", format_date(part.dates().back())}};
}

}  // namespace

void PipelineConfig::validate() const {
  split.validate();
  window.validate();
  for (const RebaseRule& r : rebase) {
    if (r.column.empty()) throw ConfigError("rebase rule needs a column");
    if (!(r.divisor > 0.0) || !std::isfinite(r.divisor)) {
      throw ConfigError("rebase divisor must be positive");
    }
  }
}

PreparedData prepare(const TimeSeriesFrame& frame, const PipelineConfig& config,
                     const std::vector<std::string>& dropped_dates) {
  config.validate();
  nlohmann::json stages = nlohmann::json::array();
  const TimeSeriesFrame transformed = adjust_and_log(frame, config, &stages);

  PreparedData out;
  out.columns = frame.columns();
  out.transformed = chronological_split(transformed, config.split);
  const auto sizes = split_sizes(transformed.rows(), config.split);
  stages.push_back({{"stage", "split"},
                    {"rows", transformed.rows()},
                    {"hash", frame_hash(out.transformed.train) + frame_hash(out.transformed.validation) +
                                 frame_hash(out.transformed.test)}});

  // Statistics come from the training split only.
  out.stats = fit_norm_stats(out.transformed.train);
  out.normalized = {normalize(out.transformed.train, out.stats),
                    normalize(out.transformed.validation, out.stats),
                    normalize(out.transformed.test, out.stats)};
  stages.push_back({{"stage", "normalize"},
                    {"rows", transformed.rows()},
                    {"hash", frame_hash(out.normalized.train) + frame_hash(out.normalized.validation) +
                                 frame_hash(out.normalized.test)}});

  // Each split is windowed on its own so no sample straddles a boundary.
  out.train = make_windows(out.normalized.train, config.window);
  out.validation = make_windows(out.normalized.validation, config.window);
  out.test = make_windows(out.normalized.test, config.window);
  stages.push_back({{"stage", "window"},
                    {"train", out.train.size()},
                    {"validation", out.validation.size()},
                    {"test", out.test.size()}});

  const std::size_t v_end = sizes.train + sizes.validation;
  out.report = {{"config", to_json(config)},
                {"stages", stages},
                {"dropped_rows", dropped_dates},
                {"splits",
                 {{"train", range_json(0, sizes.train, out.transformed.train)},
                  {"validation", range_json(sizes.train, v_end, out.transformed.validation)},
                  {"test", range_json(v_end, transformed.rows(), out.transformed.test)}}},
                {"norm_stats", to_json(out.stats)}};
  return out;
}

TimeSeriesFrame apply_transforms(const TimeSeriesFrame& frame, const PipelineConfig& config,
                                 const NormStats& stats) {
  if (frame.columns() != stats.columns) {
    throw DimensionError("input columns do not match the fitted normalization statistics");
  }
  return normalize(adjust_and_log(frame, config, nullptr), stats);
}

double to_price(const NormStats& stats, std::size_t col, double z, bool log_applied) {
  const double v = stats.denormalize(col, z);
  return log_applied ? std::exp(v) : v;
}

nlohmann::json to_json(const PipelineConfig& config) {
  nlohmann::json rebase = nlohmann::json::array();
  for (const RebaseRule& r : config.rebase) {
    rebase.push_back(
        {{"column", r.column}, {"cutoff", format_date(r.cutoff)}, {"divisor", r.divisor}});
  }
  return {{"rebase", rebase},
          {"log_transform", config.log_transform},
          {"split",
           {{"train", config.split.train},
            {"validation", config.split.validation},
            {"test", config.split.test}}},
          {"window", {{"input_steps", config.window.input_steps}, {"horizon", config.window.horizon}}}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  for (const auto& r : j.at("rebase")) {
    c.rebase.push_back({r.at("column").get<std::string>(),
                        parse_date(r.at("cutoff").get<std::string>()),
                        r.at("divisor").get<double>()});
  }
  c.log_transform = j.at("log_transform").get<bool>();
  const auto& s = j.at("split");
  c.split = {s.at("train").get<double>(), s.at("validation").get<double>(),
             s.at("test").get<double>()};
  const auto& w = j.at("window");
  c.window = {w.at("input_steps").get<std::size_t>(), w.at("horizon").get<std::size_t>()};
  c.validate();
  return c;
}

nlohmann::json to_json(const NormStats& stats) {
  return {{"columns", stats.columns}, {"mean", stats.mean}, {"std", stats.std}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s{j.at("columns").get<std::vector<std::string>>(),
              j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
  if (s.mean.size() != s.columns.size() || s.std.size() != s.columns.size()) {
    throw ConfigError("normalization statistics: inconsistent lengths");
  }
  for (double sd : s.std)
    if (!(sd > 0.0)) throw ConfigError("normalization statistics: nonpositive std");
  return s;
}

}  // namespace marketgraph
