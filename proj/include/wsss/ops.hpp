#pragma once

#include <cstddef>
#include <vector>

#include "wsss/tensor.hpp"

// Differentiable tensor operations. Each records its gradient rule when any
// input requires a gradient. Shape violations throw ShapeError.
namespace wsss {

inline constexpr double kLogClamp = 1e-12;

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// a: [m x n], row: [n]; adds row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
// Natural log of max(x, 1e-12); the gradient is zero where the clamp binds.
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// Max-subtracted softmax along one axis.
Tensor softmax(const Tensor& x, std::size_t axis);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
// Rows of a matrix by index; repeated indices accumulate in the gradient.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);
// Flat-index gather, result reshaped to `shape`.
Tensor take(const Tensor& x, const std::vector<std::size_t>& flat,
            Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reduces one axis away. Sums run in ascending index order.
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

// Row-wise normalisation of x: [m x n] with affine gamma, beta: [n].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

}  // namespace wsss
