#include "marketgraph/synthetic.hpp"

#include <cmath>

#include "marketgraph/errors.hpp"
#include "marketgraph/rng.hpp"

namespace marketgraph {

SyntheticData coupled_var1(const SyntheticSpec& spec) {
  if (spec.nodes < 2 || spec.steps < 2) throw ConfigError("synthetic: need 2 nodes and 2 steps");
  const std::size_t n = spec.nodes;
  Rng rng(spec.seed);
  std::vector<double> x(n, 0.0), next(n);
  std::vector<double> values;
  values.reserve(spec.steps * n);
  for (std::size_t t = 0; t < spec.burn_in + spec.steps; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      next[(i + 1) % n] = spec.coupling * x[i] + spec.noise * rng.normal();
    x.swap(next);
    if (t < spec.burn_in) continue;
    for (double v : x) values.push_back(std::exp(spec.level + v));
  }
  std::vector<Date> dates;
  const std::chrono::sys_days start{std::chrono::year{2000} / 1 / 1};
  for (std::size_t t = 0; t < spec.steps; ++t)
    dates.emplace_back(start + std::chrono::days{static_cast<int>(t)});
  std::vector<std::string> columns;
  for (std::size_t i = 0; i < n; ++i) columns.push_back("s" + std::to_string(i));

  Tensor coupling({n, n});
  for (std::size_t i = 0; i < n; ++i) coupling.at((i + 1) % n, i) = spec.coupling;
  return {TimeSeriesFrame(std::move(dates), std::move(columns), std::move(values)),
          std::move(coupling)};
}

}  // namespace marketgraph
