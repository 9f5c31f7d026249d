#include "marketgraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "marketgraph/errors.hpp"

namespace marketgraph {
namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* name) {
  if (y.size() != yhat.size()) {
    throw DimensionError(std::string(name) + ": " + std::to_string(y.size()) + " actual vs " +
                         std::to_string(yhat.size()) + " predicted values");
  }
  if (y.empty()) throw DimensionError(std::string(name) + ": empty input");
}

double squared_error_sum(std::span<const double> y, std::span<const double> yhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DomainError("correlation of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double rse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "rse");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double denom = 0.0;
  for (double v : y) denom += (v - mean) * (v - mean);
  if (!(denom > 0.0)) throw DomainError("rse is undefined for a constant actual series");
  return squared_error_sum(y, yhat) / denom;
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "rmse");
  return std::sqrt(squared_error_sum(y, yhat) / static_cast<double>(y.size()));
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double mape(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mape");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw DomainError("mape is undefined when an actual value is 0");
    s += std::abs((y[i] - yhat[i]) / y[i]);
  }
  return s / static_cast<double>(y.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "spearman");
  if (x.size() < 3) throw DimensionError("spearman needs at least 3 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

LabeledMatrix spearman_matrix(const TimeSeriesFrame& frame) {
  const std::size_t n = frame.cols();
  if (frame.rows() < 3) throw DimensionError("spearman matrix needs at least 3 rows");
  std::vector<std::vector<double>> ranks;
  for (std::size_t c = 0; c < n; ++c) {
    const auto col = frame.column(c);
    if (std::adjacent_find(col.begin(), col.end(), std::not_equal_to<>()) == col.end()) {
      throw DomainError("column '" + frame.columns()[c] + "' is constant");
    }
    ranks.push_back(average_ranks(col));
  }
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    m.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = pearson(ranks[i], ranks[j]);
      m.at(i, j) = r;
      m.at(j, i) = r;
    }
  }
  return {frame.columns(), std::move(m)};
}

double dtw_distance(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw DimensionError("dtw needs two nonempty series");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t m = y.size();
  std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = std::abs(x[i - 1] - y[j - 1]);
      cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

LabeledMatrix dtw_matrix(const TimeSeriesFrame& frame, bool zscore) {
  const std::size_t n = frame.cols();
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < n; ++c) {
    auto col = frame.column(c);
    if (zscore) {
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
      double ss = 0.0;
      for (double v : col) ss += (v - mean) * (v - mean);
      const double sd = col.size() > 1 ? std::sqrt(ss / (col.size() - 1)) : 0.0;
      if (!(sd > 0.0)) throw DomainError("column '" + frame.columns()[c] + "' is constant");
      for (double& v : col) v = (v - mean) / sd;
    }
    cols.push_back(std::move(col));
  }
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dtw_distance(cols[i], cols[j]);
      m.at(i, j) = d;
      m.at(j, i) = d;
    }
  return {frame.columns(), std::move(m)};
}

}  // namespace marketgraph
