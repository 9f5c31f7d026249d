#pragma once

#include <string>
#include <vector>

#include "marketgraph/data.hpp"
#include "marketgraph/metrics.hpp"

namespace marketgraph::svg {

/// Square heatmap; every cell rect carries data-row, data-col and data-value.
std::string heatmap(const LabeledMatrix& m, const std::string& title);

struct Line {
  std::string name;
  std::vector<double> values;
  std::string color;
};

/// Lines over a shared date axis.
std::string line_chart(const std::vector<Date>& dates, const std::vector<Line>& lines,
                       const std::string& title);

std::string escape(const std::string& text);

}  // namespace marketgraph::svg
