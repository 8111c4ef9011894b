#pragma once

// Dense products for tensor storage. Eigen chooses packet or scalar code per
// element from the runtime address of each operand, so products taken on
// arbitrary std::vector storage can round differently between runs. Operands
// are copied into Eigen-owned matrices, which always share one alignment.

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>

namespace mmgs::ad::dense {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Owned copy of the row-major [rows x cols] block at `data`, optionally transposed.
template <class T>
RowMatrix<T> owned(const T* data, std::size_t rows, std::size_t cols, bool transpose = false) {
    const Eigen::Map<const RowMatrix<T>> m(data, static_cast<Eigen::Index>(rows),
                                           static_cast<Eigen::Index>(cols));
    return transpose ? RowMatrix<T>(m.transpose()) : RowMatrix<T>(m);
}

/// out = product, or out += product when `accumulate`.
template <class T>
void write(const RowMatrix<T>& product, T* out, bool accumulate) {
    const T* src = product.data();
    const auto n = static_cast<std::size_t>(product.size());
    if (!accumulate) {
        std::copy_n(src, n, out);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i] += src[i];
    }
}

/// out[c] += sum over rows of g[r x c].
template <class T>
void add_column_sums(const T* g, std::size_t rows, std::size_t cols, T* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] += g[r * cols + c];
        }
    }
}

/// out[r x c] += row[c] for every row.
template <class T>
void add_to_rows(T* out, std::size_t rows, std::size_t cols, const T* row) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] += row[c];
        }
    }
}

} // namespace mmgs::ad::dense
