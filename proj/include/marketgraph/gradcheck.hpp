#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "marketgraph/tape.hpp"

namespace marketgraph {

/// Builds a scalar on `tape` from a leaf holding the input tensor.
using ScalarFn = std::function<Var(Tape& tape, const Var& x)>;
/// Builds a scalar on `tape`; parameters are recorded by the function itself.
using ScalarProgram = std::function<Var(Tape& tape)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Upper bound on checked coordinates per tensor (0 = all). Coordinates
  /// are taken at an even stride when the bound applies.
  std::size_t max_coords = 0;
};

/// Compares reverse-mode gradients against central finite differences.
/// Returns max over coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double grad_check(const ScalarFn& f, const Tensor& x, GradCheckOptions options = {});

/// Same comparison over every coordinate of each parameter in `params`.
/// Parameter values are restored before returning.
double grad_check(const ScalarProgram& f, std::span<Parameter* const> params,
                  GradCheckOptions options = {});

}  // namespace marketgraph
