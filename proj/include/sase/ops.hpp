#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sase/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops broadcast with
// right-aligned extents; every op records onto the tape when an input
// requires grad.

namespace sase {

enum class ElementwiseOp { add, sub, mul, div, exp, log, relu, leaky_relu, sigmoid, tanh };

// Generic entry point; `slope` only applies to leaky_relu.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr,
                   double slope = 0.01);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws NumericError on a zero denominator unless `eps` > 0, in which case
// computes a / (b + eps).
Tensor div(const Tensor& a, const Tensor& b, double eps = 0.0);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// [M,K] x [K,P] -> [M,P]; rank-3 operands multiply batch-by-batch.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ReduceOp { sum, mean, max };

// `axes` must be non-empty; use clone() for an identity copy.
Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<std::int64_t>& axes,
              bool keepdims = false);
Tensor sum(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdims = false);
Tensor mean(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdims = false);
Tensor max(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdims = false);
// Reduces every axis to a scalar.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::int64_t axis);

Tensor reshape(const Tensor& a, const Shape& shape);
// General axis permutation.
Tensor permute(const Tensor& a, const std::vector<std::int64_t>& order);
// Swap the last two axes.
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
std::vector<Tensor> split(const Tensor& a, std::int64_t axis, std::int64_t groups);
Tensor narrow(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length);
// Insert / remove a unit axis.
Tensor unsqueeze(const Tensor& a, std::int64_t axis);
Tensor squeeze(const Tensor& a, std::int64_t axis);

// Mean cross-entropy of logits [B,K] against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);

namespace detail {

// Sums a gradient laid out over `from` down to the broadcast source `to`.
std::vector<double> sum_to_shape(std::span<const double> grad, const Shape& from,
                                 const Shape& to);

}  // namespace detail

}  // namespace sase
