#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "marketgraph/tape.hpp"

namespace marketgraph {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators, one pair per parameter, in call order.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update using each parameter's `grad`.
/// Weight decay, if any, must already be folded into the gradients.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config);

}  // namespace marketgraph
