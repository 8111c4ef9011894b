#include "mmgs/ad/ops.hpp"

#include "mmgs/common/error.hpp"

#include "dense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmgs::ad {

namespace {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
    }
}

// Elementwise map with derivative expressed through input x and output y.
template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, F f, D df) {
    const auto x = a.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    return make_result<T>(a.shape(), std::move(y), {a}, [df](detail::Node<T>& node) {
        T* ga = parent_grad(node, 0);
        if (!ga) {
            return;
        }
        const auto& xv = node.parents[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            ga[i] += node.grad[i] * df(xv[i], node.value[i]);
        }
    });
}

} // namespace

template <std::floating_point T>
std::size_t rows_of(const Tensor<T>& a) {
    const auto& s = a.shape();
    if (s.size() <= 1) {
        return 1;
    }
    return a.numel() / s.back();
}

template <std::floating_point T>
std::size_t cols_of(const Tensor<T>& a) {
    return a.shape().back();
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] + y[i];
    }
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (T* g = parent_grad(node, p)) {
                for (std::size_t i = 0; i < node.grad.size(); ++i) {
                    g[i] += node.grad[i];
                }
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] - y[i];
    }
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                g[i] += node.grad[i];
            }
        }
        if (T* g = parent_grad(node, 1)) {
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                g[i] -= node.grad[i];
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * y[i];
    }
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
        const auto& xv = node.parents[0]->value;
        const auto& yv = node.parents[1]->value;
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                g[i] += node.grad[i] * yv[i];
            }
        }
        if (T* g = parent_grad(node, 1)) {
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                g[i] += node.grad[i] * xv[i];
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <std::floating_point T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
    return unary(a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary(
        a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <std::floating_point T>
Tensor<T> elu(const Tensor<T>& a) {
    return unary(
        a, [](T x) { return x > T(0) ? x : std::expm1(x); },
        [](T x, T y) { return x > T(0) ? T(1) : y + T(1); });
}

template <std::floating_point T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    return unary(
        a, [slope](T x) { return x > T(0) ? x : slope * x; },
        [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <std::floating_point T>
Tensor<T> tanh(const Tensor<T>& a) {
    return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary(
        a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <std::floating_point T>
Tensor<T> exp(const Tensor<T>& a) {
    return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <std::floating_point T>
Tensor<T> square(const Tensor<T>& a) {
    return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a) {
    const auto x = a.data();
    const T total = std::accumulate(x.begin(), x.end(), T(0));
    return make_result<T>({1}, {total}, {a}, [](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            const std::size_t n = node.parents[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) {
                g[i] += node.grad[0];
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a) {
    const auto n = static_cast<T>(a.numel());
    return scale(sum(a), T(1) / n);
}

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ContractViolation("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
    }
    const auto n = a.dim(0);
    const auto k = a.dim(1);
    const auto m = b.dim(1);
    std::vector<T> out(n * m);
    dense::write<T>(dense::owned(a.data().data(), n, k) * dense::owned(b.data().data(), k, m),
                    out.data(), false);
    return make_result<T>({n, m}, std::move(out), {a, b}, [n, k, m](detail::Node<T>& node) {
        const auto gout = dense::owned(node.grad.data(), n, m);
        if (T* g = parent_grad(node, 0)) {
            dense::write<T>(gout * dense::owned(node.parents[1]->value.data(), k, m, true), g, true);
        }
        if (T* g = parent_grad(node, 1)) {
            dense::write<T>(dense::owned(node.parents[0]->value.data(), n, k, true) * gout, g, true);
        }
    });
}

template <std::floating_point T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const auto n = rows_of(x);
    const auto in = cols_of(x);
    if (weight.rank() != 2 || weight.dim(0) != in || bias.numel() != weight.dim(1)) {
        throw ContractViolation("linear: input " + shape_string(x.shape()) + ", weight " +
                                shape_string(weight.shape()) + ", bias " +
                                shape_string(bias.shape()));
    }
    const auto out_dim = weight.dim(1);
    std::vector<T> out(n * out_dim);
    dense::write<T>(dense::owned(x.data().data(), n, in) * dense::owned(weight.data().data(), in, out_dim),
                    out.data(), false);
    dense::add_to_rows(out.data(), n, out_dim, bias.data().data());
    return make_result<T>(
        {n, out_dim}, std::move(out), {x, weight, bias}, [n, in, out_dim](detail::Node<T>& node) {
            const auto gout = dense::owned(node.grad.data(), n, out_dim);
            if (T* g = parent_grad(node, 0)) {
                dense::write<T>(gout * dense::owned(node.parents[1]->value.data(), in, out_dim, true), g, true);
            }
            if (T* g = parent_grad(node, 1)) {
                dense::write<T>(dense::owned(node.parents[0]->value.data(), n, in, true) * gout, g, true);
            }
            if (T* g = parent_grad(node, 2)) {
                dense::add_column_sums(node.grad.data(), n, out_dim, g);
            }
        });
}

template <std::floating_point T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    if (row.numel() != d) {
        throw ContractViolation("add_row: row of " + std::to_string(row.numel()) +
                                " values for matrix " + shape_string(a.shape()));
    }
    const auto x = a.data();
    const auto r = row.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = x[i * d + j] + r[j];
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a, row}, [n, d](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < n * d; ++i) {
                g[i] += node.grad[i];
            }
        }
        if (T* g = parent_grad(node, 1)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    g[j] += node.grad[i * d + j];
                }
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> mul_col(const Tensor<T>& a, const Tensor<T>& col) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    if (col.numel() != n) {
        throw ContractViolation("mul_col: column of " + std::to_string(col.numel()) +
                                " values for matrix " + shape_string(a.shape()));
    }
    const auto x = a.data();
    const auto c = col.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = x[i * d + j] * c[i];
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a, col}, [n, d](detail::Node<T>& node) {
        const auto& xv = node.parents[0]->value;
        const auto& cv = node.parents[1]->value;
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    g[i * d + j] += node.grad[i * d + j] * cv[i];
                }
            }
        }
        if (T* g = parent_grad(node, 1)) {
            for (std::size_t i = 0; i < n; ++i) {
                T acc = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    acc += node.grad[i * d + j] * xv[i * d + j];
                }
                g[i] += acc;
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
    if (parts.empty()) {
        throw ContractViolation("concat_cols: no inputs");
    }
    const auto n = rows_of(parts[0]);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (rows_of(p) != n) {
            throw ContractViolation("concat_cols: row count mismatch " +
                                    shape_string(parts[0].shape()) + " vs " +
                                    shape_string(p.shape()));
        }
        widths.push_back(cols_of(p));
        total += widths.back();
    }
    std::vector<T> out(n * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto x = parts[k].data();
        const auto w = widths[k];
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(x.begin() + i * w, w, out.begin() + i * total + offset);
        }
        offset += w;
    }
    return make_result<T>({n, total}, std::move(out), std::vector<Tensor<T>>(parts.begin(), parts.end()),
                          [n, total, widths](detail::Node<T>& node) {
                              std::size_t off = 0;
                              for (std::size_t k = 0; k < widths.size(); ++k) {
                                  const auto w = widths[k];
                                  if (T* g = parent_grad(node, k)) {
                                      for (std::size_t i = 0; i < n; ++i) {
                                          for (std::size_t j = 0; j < w; ++j) {
                                              g[i * w + j] += node.grad[i * total + off + j];
                                          }
                                      }
                                  }
                                  off += w;
                              }
                          });
}

template <std::floating_point T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
    if (parts.empty()) {
        throw ContractViolation("concat_rows: no inputs");
    }
    const auto d = cols_of(parts[0]);
    std::vector<std::size_t> sizes;
    std::size_t rows = 0;
    std::vector<T> out;
    for (const auto& p : parts) {
        if (cols_of(p) != d) {
            throw ContractViolation("concat_rows: column count mismatch " +
                                    shape_string(parts[0].shape()) + " vs " +
                                    shape_string(p.shape()));
        }
        sizes.push_back(p.numel());
        rows += rows_of(p);
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_result<T>({rows, d}, std::move(out), std::vector<Tensor<T>>(parts.begin(), parts.end()),
                          [sizes](detail::Node<T>& node) {
                              std::size_t off = 0;
                              for (std::size_t k = 0; k < sizes.size(); ++k) {
                                  if (T* g = parent_grad(node, k)) {
                                      for (std::size_t i = 0; i < sizes[k]; ++i) {
                                          g[i] += node.grad[off + i];
                                      }
                                  }
                                  off += sizes[k];
                              }
                          });
}

template <std::floating_point T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    if (begin >= end || end > d) {
        throw ContractViolation("slice_cols: [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") of " + shape_string(a.shape()));
    }
    const auto w = end - begin;
    const auto x = a.data();
    std::vector<T> out(n * w);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(x.begin() + i * d + begin, w, out.begin() + i * w);
    }
    return make_result<T>({n, w}, std::move(out), {a}, [n, d, w, begin](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    g[i * d + begin + j] += node.grad[i * w + j];
                }
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    if (begin >= end || end > n) {
        throw ContractViolation("slice_rows: [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") of " + shape_string(a.shape()));
    }
    const auto x = a.data();
    std::vector<T> out(x.begin() + begin * d, x.begin() + end * d);
    return make_result<T>({end - begin, d}, std::move(out), {a}, [begin, d](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                g[begin * d + i] += node.grad[i];
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> rows) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    if (rows.empty()) {
        throw ContractViolation("gather_rows: empty index list");
    }
    const auto x = a.data();
    std::vector<T> out(rows.size() * d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= n) {
            throw ContractViolation("gather_rows: row " + std::to_string(rows[r]) +
                                    " out of range for " + shape_string(a.shape()));
        }
        std::copy_n(x.begin() + rows[r] * d, d, out.begin() + r * d);
    }
    std::vector<std::size_t> index(rows.begin(), rows.end());
    return make_result<T>({rows.size(), d}, std::move(out), {a},
                          [index, d](detail::Node<T>& node) {
                              if (T* g = parent_grad(node, 0)) {
                                  for (std::size_t r = 0; r < index.size(); ++r) {
                                      for (std::size_t j = 0; j < d; ++j) {
                                          g[index[r] * d + j] += node.grad[r * d + j];
                                      }
                                  }
                              }
                          });
}

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ContractViolation("reshape: " + shape_string(a.shape()) + " to " +
                                shape_string(shape));
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    return make_result<T>(std::move(shape), std::move(out), {a}, [](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                g[i] += node.grad[i];
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> mean_rows(const Tensor<T>& a) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    const auto x = a.data();
    std::vector<T> out(d, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[j] += x[i * d + j];
        }
    }
    const T inv = T(1) / static_cast<T>(n);
    for (auto& v : out) {
        v *= inv;
    }
    return make_result<T>({1, d}, std::move(out), {a}, [n, d, inv](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    g[i * d + j] += node.grad[j] * inv;
                }
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    const auto x = a.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.data() + i * d;
        T* y = out.data() + i * d;
        const T peak = *std::max_element(row, row + d);
        T total = 0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp(row[j] - peak);
            total += y[j];
        }
        for (std::size_t j = 0; j < d; ++j) {
            y[j] /= total;
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a}, [n, d](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < n; ++i) {
                const T* y = node.value.data() + i * d;
                const T* gy = node.grad.data() + i * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    dot += gy[j] * y[j];
                }
                for (std::size_t j = 0; j < d; ++j) {
                    g[i * d + j] += y[j] * (gy[j] - dot);
                }
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> normalize_rows(const Tensor<T>& a) {
    const auto n = rows_of(a);
    const auto d = cols_of(a);
    const auto x = a.data();
    std::vector<T> out(x.size());
    std::vector<T> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        T sq = 0;
        for (std::size_t j = 0; j < d; ++j) {
            sq += x[i * d + j] * x[i * d + j];
        }
        if (!(sq > T(0))) {
            throw ContractViolation("normalize_rows: row " + std::to_string(i) + " has zero norm");
        }
        norms[i] = std::sqrt(sq);
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = x[i * d + j] / norms[i];
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a}, [n, d, norms](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < n; ++i) {
                const T* y = node.value.data() + i * d;
                const T* gy = node.grad.data() + i * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    dot += gy[j] * y[j];
                }
                for (std::size_t j = 0; j < d; ++j) {
                    g[i * d + j] += (gy[j] - y[j] * dot) / norms[i];
                }
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> dropout(const Tensor<T>& a, T p, bool training, Rng& rng) {
    if (p < T(0) || p >= T(1)) {
        throw ContractViolation("dropout: rate must lie in [0, 1)");
    }
    if (!training || p == T(0)) {
        return a;
    }
    const T keep_scale = T(1) / (T(1) - p);
    std::vector<T> mask(a.numel());
    for (auto& m : mask) {
        m = rng.bernoulli(static_cast<double>(p)) ? T(0) : keep_scale;
    }
    const auto x = a.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * mask[i];
    }
    return make_result<T>(a.shape(), std::move(out), {a}, [mask](detail::Node<T>& node) {
        if (T* g = parent_grad(node, 0)) {
            for (std::size_t i = 0; i < mask.size(); ++i) {
                g[i] += node.grad[i] * mask[i];
            }
        }
    });
}

#define MMGS_INSTANTIATE_OPS(T)                                                                    \
    template std::size_t rows_of(const Tensor<T>&);                                                \
    template std::size_t cols_of(const Tensor<T>&);                                                \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> scale(const Tensor<T>&, T);                                                 \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
    template Tensor<T> relu(const Tensor<T>&);                                                     \
    template Tensor<T> elu(const Tensor<T>&);                                                      \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                            \
    template Tensor<T> tanh(const Tensor<T>&);                                                     \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
    template Tensor<T> exp(const Tensor<T>&);                                                      \
    template Tensor<T> square(const Tensor<T>&);                                                   \
    template Tensor<T> sum(const Tensor<T>&);                                                      \
    template Tensor<T> mean(const Tensor<T>&);                                                     \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> mul_col(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> concat_cols(std::span<const Tensor<T>>);                                    \
    template Tensor<T> concat_rows(std::span<const Tensor<T>>);                                    \
    template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                     \
    template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                     \
    template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
    template Tensor<T> mean_rows(const Tensor<T>&);                                                \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                             \
    template Tensor<T> normalize_rows(const Tensor<T>&);                                           \
    template Tensor<T> dropout(const Tensor<T>&, T, bool, Rng&);

MMGS_INSTANTIATE_OPS(float)
MMGS_INSTANTIATE_OPS(double)

#undef MMGS_INSTANTIATE_OPS

} // namespace mmgs::ad
