#include "marketgraph/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "marketgraph/errors.hpp"

namespace marketgraph {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(values_.size()));
  }
  if (!all_finite()) throw DomainError("tensor values must be finite");
}

Tensor Tensor::unchecked(Shape shape, std::vector<double> values) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  if (!std::isfinite(value)) throw DomainError("tensor values must be finite");
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw DimensionError("item() needs a single-element tensor, got " + shape_string(shape_));
  }
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return unchecked(std::move(shape), values_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("transpose needs a matrix, got " + shape_string(m.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m.at(i, j);
  return Tensor::unchecked({c, r}, std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      if (s == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return Tensor::unchecked({m, n}, std::move(out));
}

}  // namespace marketgraph
