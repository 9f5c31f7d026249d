#include "marketgraph/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "marketgraph/csv.hpp"
#include "marketgraph/errors.hpp"

namespace marketgraph {
namespace {

bool is_missing(std::string_view cell) {
  static constexpr std::string_view kMissing[] = {"", "NA", "N/A", "na", "null", "NULL",
                                                  "NaN", "nan", "-", "."};
  return std::find(std::begin(kMissing), std::end(kMissing), cell) != std::end(kMissing);
}

std::string row_col(const TimeSeriesFrame& f, std::size_t r, std::size_t c) {
  return "row " + format_date(f.dates()[r]) + ", column '" + f.columns()[c] + "'";
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string s(text);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
      std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw IngestError("invalid ISO-8601 date '" + s + "'");
  }
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw IngestError("invalid calendar date '" + s + "'");
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

TimeSeriesFrame::TimeSeriesFrame(std::vector<Date> dates, std::vector<std::string> columns,
                                 std::vector<double> values)
    : dates_(std::move(dates)), columns_(std::move(columns)), values_(std::move(values)) {
  if (values_.size() != dates_.size() * columns_.size()) {
    throw DimensionError("frame needs " + std::to_string(dates_.size() * columns_.size()) +
                         " values, got " + std::to_string(values_.size()));
  }
  if (std::set<std::string>(columns_.begin(), columns_.end()).size() != columns_.size()) {
    throw IngestError("column names must be unique");
  }
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    if (!(dates_[i - 1] < dates_[i])) {
      throw IngestError("dates must be strictly increasing at " + format_date(dates_[i]));
    }
  }
}

std::vector<double> TimeSeriesFrame::column(std::size_t col) const {
  if (col >= cols()) throw DimensionError("column index out of range");
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = (*this)(r, col);
  return out;
}

std::size_t TimeSeriesFrame::column_index(std::string_view name) const {
  const auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw DomainError("unknown column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

TimeSeriesFrame TimeSeriesFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw DimensionError("row slice out of range");
  const std::size_t n = cols();
  return TimeSeriesFrame(
      std::vector<Date>(dates_.begin() + begin, dates_.begin() + end), columns_,
      std::vector<double>(values_.begin() + begin * n, values_.begin() + end * n));
}

TimeSeriesFrame TimeSeriesFrame::with_values(std::vector<double> values) const {
  return TimeSeriesFrame(dates_, columns_, std::move(values));
}

LoadResult load_csv(const std::filesystem::path& path) {
  const auto rows = csv::read_rows(path);
  if (rows.empty()) throw IngestError("'" + path.string() + "' is empty");
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "date") {
    throw IngestError("header must be 'date,<name1>,...,<nameN>'");
  }
  const std::vector<std::string> columns(header.begin() + 1, header.end());
  const std::size_t n = columns.size();

  struct Parsed {
    Date date;
    std::vector<double> values;
  };
  std::vector<Parsed> parsed;
  LoadResult result;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != n + 1) {
      throw IngestError("line " + std::to_string(i + 1) + ": expected " + std::to_string(n + 1) +
                        " cells, got " + std::to_string(row.size()));
    }
    const Date date = parse_date(row[0]);
    bool missing = false;
    std::vector<double> values(n);
    for (std::size_t c = 0; c < n; ++c) {
      const std::string& cell = row[c + 1];
      if (is_missing(cell)) {
        missing = true;
        continue;
      }
      if (!csv::parse_double(cell, values[c]) || !std::isfinite(values[c])) {
        throw IngestError("line " + std::to_string(i + 1) + ", column '" + columns[c] +
                          "': unparseable cell '" + cell + "'");
      }
    }
    if (missing) {
      result.dropped_dates.push_back(row[0]);
      continue;
    }
    parsed.push_back({date, std::move(values)});
  }
  std::stable_sort(parsed.begin(), parsed.end(),
                   [](const Parsed& a, const Parsed& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < parsed.size(); ++i) {
    if (parsed[i].date == parsed[i - 1].date) {
      throw IngestError("duplicate date " + format_date(parsed[i].date));
    }
  }
  if (parsed.size() < 2) {
    throw IngestError("'" + path.string() + "' has fewer than two usable rows");
  }
  std::vector<Date> dates;
  std::vector<double> values;
  values.reserve(parsed.size() * n);
  for (auto& p : parsed) {
    dates.push_back(p.date);
    values.insert(values.end(), p.values.begin(), p.values.end());
  }
  result.frame = TimeSeriesFrame(std::move(dates), columns, std::move(values));
  return result;
}

void write_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::Row header{"date"};
  header.insert(header.end(), frame.columns().begin(), frame.columns().end());
  out << csv::join(header) << '\n';
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << format_date(frame.dates()[r]);
    for (std::size_t c = 0; c < frame.cols(); ++c) out << ',' << csv::format_double(frame(r, c));
    out << '\n';
  }
}

TimeSeriesFrame adjust_rebased_series(const TimeSeriesFrame& frame, std::string_view column,
                                      Date cutoff, double divisor) {
  if (!(divisor > 0.0)) throw DomainError("rebasing divisor must be positive");
  const std::size_t c = frame.column_index(column);
  std::vector<double> values(frame.values().begin(), frame.values().end());
  for (std::size_t r = 0; r < frame.rows() && frame.dates()[r] < cutoff; ++r) {
    values[r * frame.cols() + c] /= divisor;
  }
  return frame.with_values(std::move(values));
}

TimeSeriesFrame log_transform(const TimeSeriesFrame& frame) {
  std::vector<double> values(frame.values().size());
  for (std::size_t r = 0; r < frame.rows(); ++r)
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      const double v = frame(r, c);
      if (!(v > 0.0)) {
        throw DomainError("log of nonpositive value " + csv::format_double(v) + " at " +
                          row_col(frame, r, c));
      }
      values[r * frame.cols() + c] = std::log(v);
    }
  return frame.with_values(std::move(values));
}

TimeSeriesFrame exp_transform(const TimeSeriesFrame& frame) {
  std::vector<double> values(frame.values().begin(), frame.values().end());
  for (double& v : values) v = std::exp(v);
  return frame.with_values(std::move(values));
}

void SplitSpec::validate() const {
  if (!(train > 0.0 && validation > 0.0 && test > 0.0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

SplitSizes split_sizes(std::size_t rows, const SplitSpec& spec) {
  spec.validate();
  // A small epsilon keeps exact products such as 0.6 * 10 from flooring to 5.
  const auto part = [rows](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(rows) + 1e-9));
  };
  SplitSizes s{part(spec.train), part(spec.validation), 0};
  if (s.train + s.validation > rows) throw DomainError("split exceeds row count");
  s.test = rows - s.train - s.validation;
  if (s.train == 0 || s.validation == 0 || s.test == 0) {
    throw DomainError("split of " + std::to_string(rows) + " rows leaves an empty partition");
  }
  return s;
}

Splits chronological_split(const TimeSeriesFrame& frame, const SplitSpec& spec) {
  if (frame.rows() < 3) throw DomainError("chronological split needs at least 3 rows");
  const SplitSizes s = split_sizes(frame.rows(), spec);
  return {frame.slice(0, s.train), frame.slice(s.train, s.train + s.validation),
          frame.slice(s.train + s.validation, frame.rows())};
}

NormStats fit_norm_stats(const TimeSeriesFrame& frame) {
  if (frame.rows() < 2) throw DomainError("normalization statistics need at least 2 rows");
  NormStats stats;
  stats.columns = frame.columns();
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    const auto col = frame.column(c);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (col.size() - 1));
    if (!(sd > 0.0)) {
      throw DomainError("column '" + frame.columns()[c] + "' has zero variance");
    }
    stats.mean.push_back(mean);
    stats.std.push_back(sd);
  }
  return stats;
}

namespace {

template <typename F>
TimeSeriesFrame map_columns(const TimeSeriesFrame& frame, const NormStats& stats, F f) {
  if (stats.columns != frame.columns()) {
    throw DimensionError("normalization statistics do not match the frame's columns");
  }
  std::vector<double> values(frame.values().size());
  for (std::size_t r = 0; r < frame.rows(); ++r)
    for (std::size_t c = 0; c < frame.cols(); ++c) values[r * frame.cols() + c] = f(c, frame(r, c));
  return frame.with_values(std::move(values));
}

}  // namespace

TimeSeriesFrame normalize(const TimeSeriesFrame& frame, const NormStats& stats) {
  return map_columns(frame, stats, [&](std::size_t c, double v) { return stats.normalize(c, v); });
}

TimeSeriesFrame denormalize(const TimeSeriesFrame& frame, const NormStats& stats) {
  return map_columns(frame, stats,
                     [&](std::size_t c, double v) { return stats.denormalize(c, v); });
}

void WindowSpec::validate() const {
  if (input_steps < 1 || horizon < 1) throw ConfigError("window needs P >= 1 and Q >= 1");
}

WindowSet::WindowSet(std::size_t nodes, WindowSpec spec, std::vector<double> inputs,
                     std::vector<double> targets, std::vector<Date> target_dates)
    : nodes_(nodes),
      spec_(spec),
      inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      target_dates_(std::move(target_dates)) {
  const std::size_t count = target_dates_.size();
  if (inputs_.size() != count * nodes_ * spec_.input_steps ||
      targets_.size() != count * nodes_ * spec_.horizon) {
    throw DimensionError("window buffers do not match the window count");
  }
}

Tensor WindowSet::input(std::size_t i) const {
  const std::size_t len = nodes_ * spec_.input_steps;
  return Tensor::unchecked({nodes_, spec_.input_steps},
                           std::vector<double>(inputs_.begin() + i * len,
                                               inputs_.begin() + (i + 1) * len));
}

Tensor WindowSet::target(std::size_t i) const {
  const std::size_t len = nodes_ * spec_.horizon;
  return Tensor::unchecked({nodes_, spec_.horizon},
                           std::vector<double>(targets_.begin() + i * len,
                                               targets_.begin() + (i + 1) * len));
}

Tensor WindowSet::batch_inputs(std::span<const std::size_t> indices) const {
  const std::size_t len = nodes_ * spec_.input_steps;
  std::vector<double> out;
  out.reserve(indices.size() * len);
  for (std::size_t i : indices) {
    out.insert(out.end(), inputs_.begin() + i * len, inputs_.begin() + (i + 1) * len);
  }
  return Tensor::unchecked({indices.size(), nodes_, spec_.input_steps}, std::move(out));
}

Tensor WindowSet::batch_targets(std::span<const std::size_t> indices) const {
  const std::size_t n = nodes_, q = spec_.horizon;
  std::vector<double> out(indices.size() * q * n);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const double* src = targets_.data() + indices[b] * n * q;
    for (std::size_t node = 0; node < n; ++node)
      for (std::size_t h = 0; h < q; ++h) out[(b * q + h) * n + node] = src[node * q + h];
  }
  return Tensor::unchecked({indices.size(), q, n}, std::move(out));
}

WindowSet make_windows(const TimeSeriesFrame& frame, const WindowSpec& spec, std::size_t stride) {
  spec.validate();
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  const std::size_t p = spec.input_steps, q = spec.horizon, n = frame.cols();
  if (frame.rows() < p + q) {
    throw DomainError("window needs " + std::to_string(p + q) + " rows, frame has " +
                      std::to_string(frame.rows()));
  }
  std::vector<double> inputs, targets;
  std::vector<Date> dates;
  for (std::size_t start = 0; start + p + q <= frame.rows(); start += stride) {
    for (std::size_t node = 0; node < n; ++node)
      for (std::size_t t = 0; t < p; ++t) inputs.push_back(frame(start + t, node));
    for (std::size_t node = 0; node < n; ++node)
      for (std::size_t h = 0; h < q; ++h) targets.push_back(frame(start + p + h, node));
    dates.push_back(frame.dates()[start + p]);
  }
  return WindowSet(n, spec, std::move(inputs), std::move(targets), std::move(dates));
}

DescriptiveStats describe(std::span<const double> values, std::string name) {
  const std::size_t n = values.size();
  if (n < 2) throw DomainError("descriptive statistics need at least 2 values");
  DescriptiveStats s;
  s.name = std::move(name);
  s.size = n;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  if (!(m2 > 0.0)) throw DomainError("skewness and kurtosis are undefined for a constant column");
  s.std = std::sqrt(m2 / (n - 1));
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.skewness = m3 / std::pow(m2, 1.5);
  s.kurtosis = m4 / (m2 * m2);
  return s;
}

std::vector<DescriptiveStats> descriptive_stats(const TimeSeriesFrame& frame) {
  std::vector<DescriptiveStats> out;
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    const auto col = frame.column(c);
    out.push_back(describe(col, frame.columns()[c]));
  }
  return out;
}

std::string frame_hash(const TimeSeriesFrame& frame) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : frame.columns()) feed(name.data(), name.size() + 1);
  for (const Date& d : frame.dates()) {
    const int days = std::chrono::sys_days(d).time_since_epoch().count();
    feed(&days, sizeof days);
  }
  for (double v : frame.values()) feed(&v, sizeof v);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace marketgraph
