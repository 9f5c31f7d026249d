#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace marketgraph {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A rank-0 tensor (empty shape) holds a single scalar. Construction from
/// user-supplied values rejects NaN and infinities; the unchecked factory is
/// reserved for operation outputs, which the tape validates separately.
class Tensor {
 public:
  Tensor() : values_(1, 0.0) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor identity(std::size_t n);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor unchecked(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;
  void fill(double value) noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

Tensor transpose(const Tensor& m);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace marketgraph
