#pragma once

#include "mmgs/ad/tensor.hpp"
#include "mmgs/common/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

// Operations used by the refinement pipeline. Matrices are rank-2 row-major
// tensors [rows x cols]; row vectors may be given as [cols] or [1 x cols].

namespace mmgs::ad {

template <std::floating_point T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <std::floating_point T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <std::floating_point T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <std::floating_point T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <std::floating_point T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);

template <std::floating_point T> Tensor<T> relu(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> elu(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope);
template <std::floating_point T> Tensor<T> tanh(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> sigmoid(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> exp(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> square(const Tensor<T>& a);

/// Scalar sum / mean of all elements, shape [1].
template <std::floating_point T> Tensor<T> sum(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> mean(const Tensor<T>& a);

/// [n x k] * [k x m] -> [n x m]
template <std::floating_point T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x [n x in] * weight [in x out] + bias [out]
template <std::floating_point T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// a [n x d] + row [d] broadcast over rows.
template <std::floating_point T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);
/// a [n x d] scaled row-wise by col [n].
template <std::floating_point T> Tensor<T> mul_col(const Tensor<T>& a, const Tensor<T>& col);

template <std::floating_point T> Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <std::floating_point T> Tensor<T> concat_rows(std::span<const Tensor<T>> parts);
template <std::floating_point T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <std::floating_point T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);
/// Rows picked by index (repeats allowed), gradients scatter-add back.
template <std::floating_point T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> rows);
template <std::floating_point T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Column means of [n x d] -> [1 x d].
template <std::floating_point T> Tensor<T> mean_rows(const Tensor<T>& a);
template <std::floating_point T> Tensor<T> softmax_rows(const Tensor<T>& a);
/// Each row divided by its Euclidean norm.
template <std::floating_point T> Tensor<T> normalize_rows(const Tensor<T>& a);

/// Inverted dropout: identity when !training or p == 0.
template <std::floating_point T>
Tensor<T> dropout(const Tensor<T>& a, T p, bool training, Rng& rng);

/// 2-D shape helpers.
template <std::floating_point T> std::size_t rows_of(const Tensor<T>& a);
template <std::floating_point T> std::size_t cols_of(const Tensor<T>& a);

} // namespace mmgs::ad
