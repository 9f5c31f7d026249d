#pragma once

#include <cstddef>
#include <cstdint>

#include "marketgraph/data.hpp"

namespace marketgraph {

/// Directed ring VAR(1): x_{i+1, t} = coupling * x_{i, t-1} + noise * e, with
/// prices exp(level + x). Only node i feeds node i+1 (mod N).
struct SyntheticSpec {
  std::size_t nodes = 6;
  std::size_t steps = 3000;
  std::size_t burn_in = 500;
  double coupling = 0.99;
  double noise = 0.02;
  double level = 4.0;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  /// Daily prices from 2000-01-01, columns s0..s{N-1}.
  TimeSeriesFrame prices;
  /// True coupling [N, N]: entry (i, j) is the weight node i receives from node j.
  Tensor coupling;
};

SyntheticData coupled_var1(const SyntheticSpec& spec);

}  // namespace marketgraph
