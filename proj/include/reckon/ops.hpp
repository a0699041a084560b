#pragma once

#include <span>
#include <vector>

#include "reckon/tape.hpp"
#include "reckon/tensor.hpp"

namespace reckon::ad {

// Elementwise with numpy-style trailing broadcast (dims equal or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor recip(const Tensor& a);

// Identity with a fresh buffer; gradient passes through. Used for deep
// parameter copies that stay connected to their source.
Tensor clone(const Tensor& a);

// Cuts the tensor out of the graph (shared buffer, no tape handle).
Tensor detach(const Tensor& a);

// Batched matmul over the last two axes. Leading (batch) dims must match, or
// either operand may be rank-2 and is shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Swap the last two axes (materialized).
Tensor transpose(const Tensor& a);
// Swap two arbitrary axes.
Tensor swap_axes(const Tensor& a, long ax0, long ax1);

Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor concat(std::span<const Tensor> parts, long axis);
Tensor slice(const Tensor& a, long axis, long start, long len);

// Sum over the given axes (empty set = all axes -> rank 0).
Tensor sum(const Tensor& a, std::span<const long> axes, bool keepdim);
Tensor sum_all(const Tensor& a);
Tensor mean(const Tensor& a, std::span<const long> axes, bool keepdim);
Tensor mean_all(const Tensor& a);

// Rows of `table` gathered by id; `out_shape` is ids' shape + [row width].
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Adds each row of `updates` into row ids[i] of a zero [num_rows, width]
// tensor. Gradient of embedding; differentiable in its own right.
Tensor scatter_add(long num_rows, std::span<const int> ids, const Tensor& updates);

// out[i] = a[i, ids[i]] over the last axis (a flattened to [rows, width]).
Tensor take_last(const Tensor& a, std::span<const int> ids);
// Inverse scatter of take_last: puts values[i] at [i, ids[i]] of zeros.
Tensor put_last(const Tensor& values, std::span<const int> ids, long width, const Shape& out_shape);

// Row maxima over the last axis as a detached constant (keepdim).
Tensor max_last_detached(const Tensor& a);

// --- composites (built from the primitives; differentiable to any order) ---

// tanh-approximation GELU, the single canonical nonlinearity.
Tensor gelu(const Tensor& a);
// Numerically stable (max-subtracted) softmax over the last axis.
Tensor softmax_last(const Tensor& a);
// Layer normalization over the last axis with scale/shift.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Mean negative log-likelihood of targets under logits [rows, vocab], with an
// optional 0/1 weight per row; mean is over weighted rows (log-sum-exp form).
Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets,
                                 std::span<const double> row_weights = {});

Tensor add_scalar(const Tensor& a, double v);
Tensor mul_scalar(const Tensor& a, double v);

}  // namespace reckon::ad
