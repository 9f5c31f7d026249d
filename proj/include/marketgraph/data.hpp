#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marketgraph/tensor.hpp"

namespace marketgraph {

using Date = std::chrono::year_month_day;

/// Strict ISO-8601 calendar date (YYYY-MM-DD).
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Dated, column-named observations. Rows are strictly increasing in date,
/// column names are unique, values are row-major [rows, columns].
class TimeSeriesFrame {
 public:
  TimeSeriesFrame() = default;
  TimeSeriesFrame(std::vector<Date> dates, std::vector<std::string> columns,
                  std::vector<double> values);

  std::size_t rows() const noexcept { return dates_.size(); }
  std::size_t cols() const noexcept { return columns_.size(); }
  const std::vector<Date>& dates() const noexcept { return dates_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  std::span<const double> values() const noexcept { return values_; }

  double operator()(std::size_t row, std::size_t col) const {
    return values_[row * columns_.size() + col];
  }
  std::vector<double> column(std::size_t col) const;
  std::size_t column_index(std::string_view name) const;

  /// Rows [begin, end).
  TimeSeriesFrame slice(std::size_t begin, std::size_t end) const;
  /// Same dates and columns, new values.
  TimeSeriesFrame with_values(std::vector<double> values) const;

 private:
  std::vector<Date> dates_;
  std::vector<std::string> columns_;
  std::vector<double> values_;
};

struct LoadResult {
  TimeSeriesFrame frame;
  /// Dates of rows dropped because a cell was missing.
  std::vector<std::string> dropped_dates;
};

/// Reads `date,<name1>,...,<nameN>` CSV. Rows are sorted by date; rows with an
/// empty / NA / null / NaN cell are dropped and reported. Duplicate dates,
/// unparseable cells and fewer than two usable rows are IngestErrors.
LoadResult load_csv(const std::filesystem::path& path);
/// Writes the same schema load_csv reads, with round-trip exact values.
void write_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);

/// Divides `column` by `divisor` on every row dated strictly before `cutoff`.
TimeSeriesFrame adjust_rebased_series(const TimeSeriesFrame& frame, std::string_view column,
                                      Date cutoff, double divisor);

/// Elementwise natural log; nonpositive values are a DomainError naming row and column.
TimeSeriesFrame log_transform(const TimeSeriesFrame& frame);
TimeSeriesFrame exp_transform(const TimeSeriesFrame& frame);

struct SplitSpec {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;

  void validate() const;
};

struct SplitSizes {
  std::size_t train;
  std::size_t validation;
  std::size_t test;
};

/// floor(train * n), floor(validation * n), remainder.
SplitSizes split_sizes(std::size_t rows, const SplitSpec& spec);

struct Splits {
  TimeSeriesFrame train;
  TimeSeriesFrame validation;
  TimeSeriesFrame test;
};

Splits chronological_split(const TimeSeriesFrame& frame, const SplitSpec& spec);

/// Per-column mean and sample standard deviation.
struct NormStats {
  std::vector<std::string> columns;
  std::vector<double> mean;
  std::vector<double> std;

  double normalize(std::size_t col, double v) const { return (v - mean[col]) / std[col]; }
  double denormalize(std::size_t col, double z) const { return z * std[col] + mean[col]; }
};

/// Statistics of `frame` (normally the training split). Zero variance is a DomainError.
NormStats fit_norm_stats(const TimeSeriesFrame& frame);
TimeSeriesFrame normalize(const TimeSeriesFrame& frame, const NormStats& stats);
TimeSeriesFrame denormalize(const TimeSeriesFrame& frame, const NormStats& stats);

struct WindowSpec {
  std::size_t input_steps = 30;  // P
  std::size_t horizon = 1;       // Q

  void validate() const;
};

/// Supervised samples cut from one frame: inputs [N, P] and targets [N, Q].
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::size_t nodes, WindowSpec spec, std::vector<double> inputs,
            std::vector<double> targets, std::vector<Date> target_dates);

  std::size_t size() const noexcept { return target_dates_.size(); }
  bool empty() const noexcept { return target_dates_.empty(); }
  std::size_t nodes() const noexcept { return nodes_; }
  const WindowSpec& spec() const noexcept { return spec_; }

  Tensor input(std::size_t i) const;   // [N, P]
  Tensor target(std::size_t i) const;  // [N, Q]
  /// Date of the first forecast step of each sample.
  const std::vector<Date>& target_dates() const noexcept { return target_dates_; }

  Tensor batch_inputs(std::span<const std::size_t> indices) const;   // [B, N, P]
  Tensor batch_targets(std::span<const std::size_t> indices) const;  // [B, Q, N]

 private:
  std::size_t nodes_ = 0;
  WindowSpec spec_;
  std::vector<double> inputs_;
  std::vector<double> targets_;
  std::vector<Date> target_dates_;
};

/// Sliding windows over one frame; count = (rows - P - Q) / stride + 1.
WindowSet make_windows(const TimeSeriesFrame& frame, const WindowSpec& spec,
                       std::size_t stride = 1);

struct DescriptiveStats {
  std::string name;
  std::size_t size = 0;
  double mean = 0, median = 0, std = 0, min = 0, max = 0, skewness = 0, kurtosis = 0;
};

/// Sample std (n-1); skewness m3/m2^1.5 and kurtosis m4/m2^2 from central moments.
DescriptiveStats describe(std::span<const double> values, std::string name = {});
std::vector<DescriptiveStats> descriptive_stats(const TimeSeriesFrame& frame);

/// FNV-1a digest of dates, column names and values, as 16 hex digits.
std::string frame_hash(const TimeSeriesFrame& frame);

}  // namespace marketgraph
