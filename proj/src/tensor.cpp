#include "reckon/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace reckon::ad {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out << ',';
    out << s[i];
  }
  out << ']';
  return out.str();
}

long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape) {
  auto d = std::make_shared<TensorData>();
  long n = shape_numel(shape);
  d->shape = std::move(shape);
  d->data.assign(static_cast<size_t>(n), 0.0);
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  auto d = std::make_shared<TensorData>();
  long n = shape_numel(shape);
  d->shape = std::move(shape);
  d->data.assign(static_cast<size_t>(n), value);
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  long n = shape_numel(shape);
  if (n != static_cast<long>(data.size())) {
    throw std::runtime_error("tensor: shape " + shape_str(shape) + " wants " +
                             std::to_string(n) + " elements, got " +
                             std::to_string(data.size()));
  }
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->data = std::move(data);
  return Tensor(std::move(d));
}

long Tensor::dim(long axis) const {
  if (axis < 0) axis += ndim();
  if (axis < 0 || axis >= ndim()) {
    throw std::runtime_error("tensor: axis " + std::to_string(axis) +
                             " out of range for shape " + shape_str(shape()));
  }
  return d_->shape[static_cast<size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::runtime_error("tensor: item() on shape " + shape_str(shape()));
  }
  return d_->data[0];
}

bool Tensor::all_finite() const {
  for (double v : d_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace reckon::ad
