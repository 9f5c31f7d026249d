#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marketgraph/tensor.hpp"

namespace marketgraph {

/// Trainable array: value plus a same-shaped gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool requires_grad = true);

  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;

  void zero_grad();
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Entries are appended in execution order, so every entry's inputs precede
/// it. A tape supports exactly one backward pass; reset() clears it for reuse.
class Tape {
 public:
  /// Called during backward with the tape and the id of the entry whose
  /// output gradient is ready; accumulates into the inputs' grad buffers.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Records a parameter leaf. Its gradient is added to `param.grad` by backward().
  Var leaf(Parameter& param);

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward,
             std::string_view op, std::uint64_t seed = 0);

  void backward(const Var& loss);
  void reset();

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const Tensor& value(std::size_t id) const { return entries_.at(id).value; }
  bool requires_grad(std::size_t id) const { return entries_.at(id).requires_grad; }
  std::string_view op_name(std::size_t id) const { return entries_.at(id).op; }
  /// Seed drawn by a stochastic op; 0 for deterministic ops.
  std::uint64_t seed(std::size_t id) const { return entries_.at(id).seed; }

  /// Gradient of the last backward pass w.r.t. an entry; zeros when unreached.
  Tensor grad(const Var& v) const;

  /// Grad accumulator for `id`, allocated on first use. Only for backward rules.
  Tensor& grad_buffer(std::size_t id);
  const Tensor& output_grad(std::size_t id) const { return *entries_[id].grad; }

  /// When enabled every recorded output is checked for NaN/Inf.
  /// Defaults to on in debug builds.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  bool check_finite() const noexcept { return check_finite_; }

 private:
  struct Entry {
    Tensor value;
    std::optional<Tensor> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* leaf = nullptr;
    bool requires_grad = false;
    std::string op;
    std::uint64_t seed = 0;
  };

  void ensure_open() const;

  std::vector<Entry> entries_;
  bool consumed_ = false;
  bool check_finite_;
};

}  // namespace marketgraph
