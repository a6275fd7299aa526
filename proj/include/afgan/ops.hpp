#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "afgan/tensor.hpp"

namespace afgan {

enum class ElementwiseOp { add, sub, mul, neg, log, exp, tanh, sigmoid, relu, leaky_relu };

// Binary kinds take `b` with the same shape as `a`, or a per-channel operand of
// shape (C) or (1, C, 1, 1) broadcast over dimension 1 of `a`. That is the only
// broadcast supported. `slope` is used by leaky_relu.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b = nullptr, double slope = 0.2);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElementwiseOp::add, a, &b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElementwiseOp::sub, a, &b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElementwiseOp::mul, a, &b); }
template <typename T>
Tensor<T> neg(const Tensor<T>& a) { return elementwise(ElementwiseOp::neg, a); }
// Input is clamped to >= 1e-12 so a saturated probability never yields -inf.
template <typename T>
Tensor<T> log(const Tensor<T>& a) { return elementwise(ElementwiseOp::log, a); }
template <typename T>
Tensor<T> exp(const Tensor<T>& a) { return elementwise(ElementwiseOp::exp, a); }
template <typename T>
Tensor<T> tanh(const Tensor<T>& a) { return elementwise(ElementwiseOp::tanh, a); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) { return elementwise(ElementwiseOp::sigmoid, a); }
template <typename T>
Tensor<T> relu(const Tensor<T>& a) { return elementwise(ElementwiseOp::relu, a); }
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double slope) {
  return elementwise<T>(ElementwiseOp::leaky_relu, a, nullptr, slope);
}

// a * s for a constant s.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

// (m x k) . (k x n)
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape);

enum class Reduction { sum, mean };

// Reduces over `axes` (all axes when empty or absent). Reduced axes are removed.
template <typename T>
Tensor<T> reduce(const Tensor<T>& a, Reduction kind, const std::optional<std::vector<int>>& axes = std::nullopt);

template <typename T>
Tensor<T> sum(const Tensor<T>& a) { return reduce(a, Reduction::sum); }
template <typename T>
Tensor<T> mean(const Tensor<T>& a) { return reduce(a, Reduction::mean); }

struct ConvGeometry {
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> padding{0, 0};
};

// Output extent of a strided cross-correlation; throws ShapeError unless the
// division is exact and the result positive.
std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding);
// Output extent of the transposed map: (in - 1) * stride - 2 * padding + kernel.
std::int64_t conv_transpose_out_extent(std::int64_t in, int kernel, int stride, int padding);

// x (N, C, H, W), weight (O, C, kh, kw), bias (O) or null. Cross-correlation, no flip.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvGeometry& geo);

// x (N, C, H, W), weight (C, O, kh, kw), bias (O) or null. Adjoint of conv2d in x.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvGeometry& geo);

// Per-channel statistics of the batch used by batch_norm_train (biased variance).
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
  std::int64_t count = 0;  // elements per channel
};

// Normalizes with batch statistics over (N, H, W); gamma and beta have shape (C).
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                           BatchStats* stats = nullptr);

// Normalizes with fixed statistics; differentiable in x, gamma and beta.
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& mean, const Tensor<T>& var, double eps);

inline constexpr double kProbabilityClamp = 1e-7;

// -mean(y log p + (1 - y) log(1 - p)). Each log argument is floored at 1e-7,
// so p is effectively confined to [1e-7, 1 - 1e-7] and the loss stays finite;
// the gradient is evaluated at the floored argument. Targets must be 0 or 1.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& predictions, const Tensor<T>& targets);

}  // namespace afgan
