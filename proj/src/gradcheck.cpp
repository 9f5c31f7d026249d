#include "marketgraph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "marketgraph/errors.hpp"

namespace marketgraph {
namespace {

double evaluate(const ScalarProgram& f) {
  Tape tape;
  return f(tape).value().item();
}

double relative_error(double ad, double fd) {
  return std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x, GradCheckOptions options) {
  Parameter p("x", x);
  Parameter* params[] = {&p};
  return grad_check([&](Tape& tape) { return f(tape, tape.leaf(p)); }, params, options);
}

double grad_check(const ScalarProgram& f, std::span<Parameter* const> params,
                  GradCheckOptions options) {
  if (!(options.eps > 0.0)) throw DomainError("grad_check: eps must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    const std::size_t stride =
        options.max_coords == 0 || n <= options.max_coords ? 1 : n / options.max_coords;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = p->value[i];
      p->value[i] = original + options.eps;
      const double up = evaluate(f);
      p->value[i] = original - options.eps;
      const double down = evaluate(f);
      p->value[i] = original;
      const double fd = (up - down) / (2.0 * options.eps);
      worst = std::max(worst, relative_error(p->grad[i], fd));
    }
  }
  return worst;
}

}  // namespace marketgraph
