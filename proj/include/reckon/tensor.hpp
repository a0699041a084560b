#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace reckon::ad {

class Tape;

using Shape = std::vector<long>;

std::string shape_str(const Shape& s);
long shape_numel(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> data;
  // Handle into the tape that recorded this tensor, if any. Tensors created
  // outside a tape (constants, parameters) have owner == nullptr and are
  // registered lazily as leaves by whichever tape consumes them.
  Tape* owner = nullptr;
  int node = -1;
};

// Dense row-major float64 tensor with value semantics (shared payload).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  long ndim() const { return static_cast<long>(d_->shape.size()); }
  long numel() const { return static_cast<long>(d_->data.size()); }
  long dim(long axis) const;

  std::span<const double> data() const { return d_->data; }
  std::span<double> mutable_data() { return d_->data; }
  const double* raw() const { return d_->data.data(); }
  double* raw() { return d_->data.data(); }

  // Value of a rank-0 (or single-element) tensor.
  double item() const;

  Tape* owner() const { return d_->owner; }
  int node() const { return d_->node; }
  void set_node(Tape* tape, int id) {
    d_->owner = tape;
    d_->node = id;
  }

  const TensorData* identity() const { return d_.get(); }

  bool all_finite() const;

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

}  // namespace reckon::ad
