#pragma once

#include <span>
#include <string>
#include <vector>

#include "marketgraph/data.hpp"
#include "marketgraph/tensor.hpp"

namespace marketgraph {

// Forecast error measures over paired actual / predicted values.
// Mismatched or empty inputs are DimensionErrors.

/// sum (y - yhat)^2 / sum (y - mean(y))^2. Constant y is a DomainError.
double rse(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);
/// mean |(y - yhat) / y| as a fraction. Any y == 0 is a DomainError.
double mape(std::span<const double> y, std::span<const double> yhat);

/// Square matrix with one label per row/column.
struct LabeledMatrix {
  std::vector<std::string> labels;
  Tensor values;
};

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double spearman(std::span<const double> x, std::span<const double> y);
/// Pairwise Spearman correlation of the frame's columns.
LabeledMatrix spearman_matrix(const TimeSeriesFrame& frame);

/// Dynamic time warping with |a - b| local cost and match/insert/delete
/// steps, anchored at both ends, no window constraint.
double dtw_distance(std::span<const double> x, std::span<const double> y);

/// Pairwise DTW of the frame's columns; columns are z-scored first unless
/// `zscore` is false.
LabeledMatrix dtw_matrix(const TimeSeriesFrame& frame, bool zscore = true);

}  // namespace marketgraph
