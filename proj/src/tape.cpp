#include "marketgraph/tape.hpp"

#include <algorithm>

#include "marketgraph/errors.hpp"

namespace marketgraph {

Parameter::Parameter(std::string name, Tensor value, bool requires_grad)
    : name(std::move(name)),
      value(std::move(value)),
      grad(Tensor::zeros(this->value.shape())),
      requires_grad(requires_grad) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor::zeros(value.shape());
  } else {
    grad.fill(0.0);
  }
}

const Tensor& Var::value() const { return tape().value(id_); }

Tape& Var::tape() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return *tape_;
}

bool Var::requires_grad() const { return tape().requires_grad(id_); }

Tape::Tape() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

void Tape::ensure_open() const {
  if (consumed_) throw TapeError("tape already consumed by backward(); call reset() first");
}

Var Tape::constant(Tensor value) {
  ensure_open();
  if (!value.all_finite()) throw DomainError("constant tensor contains non-finite values");
  Entry e;
  e.value = std::move(value);
  e.op = "constant";
  entries_.push_back(std::move(e));
  return Var(this, entries_.size() - 1);
}

Var Tape::leaf(Parameter& param) {
  ensure_open();
  if (!param.value.all_finite()) {
    throw DomainError("parameter '" + param.name + "' contains non-finite values");
  }
  Entry e;
  e.value = param.value;
  e.leaf = &param;
  e.requires_grad = param.requires_grad;
  e.op = "leaf";
  entries_.push_back(std::move(e));
  return Var(this, entries_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward,
                 std::string_view op, std::uint64_t seed) {
  ensure_open();
  if (check_finite_ && !value.all_finite()) {
    throw DomainError("operation '" + std::string(op) + "' produced a non-finite value");
  }
  Entry e;
  e.value = std::move(value);
  e.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](std::size_t id) { return entries_.at(id).requires_grad; });
  e.inputs = std::move(inputs);
  if (e.requires_grad) e.backward = std::move(backward);
  e.op = std::string(op);
  e.seed = seed;
  entries_.push_back(std::move(e));
  return Var(this, entries_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Entry& e = entries_.at(id);
  if (!e.grad) e.grad = Tensor::zeros(e.value.shape());
  return *e.grad;
}

Tensor Tape::grad(const Var& v) const {
  const Entry& e = entries_.at(v.id());
  return e.grad ? *e.grad : Tensor::zeros(e.value.shape());
}

void Tape::backward(const Var& loss) {
  ensure_open();
  if (&loss.tape() != this) throw TapeError("loss belongs to a different tape");
  const std::size_t root = loss.id();
  if (entries_.at(root).value.size() != 1) {
    throw TapeError("backward needs a scalar loss, got shape " +
                    shape_string(entries_[root].value.shape()));
  }
  consumed_ = true;
  grad_buffer(root).fill(1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (!e.requires_grad || !e.grad) continue;
    if (e.backward) e.backward(*this, i);
    if (e.leaf) {
      Parameter& p = *e.leaf;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor::zeros(p.value.shape());
      auto dst = p.grad.values();
      auto src = e.grad->values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

}  // namespace marketgraph
