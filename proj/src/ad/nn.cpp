#include "mmgs/ad/nn.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"

#include "dense.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace mmgs::ad {

template <std::floating_point T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
    if (contains(name)) {
        throw ContractViolation("duplicate parameter name '" + name + "'");
    }
    Tensor<T> t(std::move(shape), std::move(values), true);
    t.set_name(name);
    params_.push_back(t);
    return t;
}

template <std::floating_point T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name() == name) {
            return p;
        }
    }
    throw ContractViolation("unknown parameter '" + name + "'");
}

template <std::floating_point T>
bool ParameterStore<T>::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(),
                       [&](const Tensor<T>& p) { return p.name() == name; });
}

template <std::floating_point T>
std::size_t ParameterStore<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.numel();
    }
    return n;
}

template <std::floating_point T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) {
        p.clear_grad();
    }
}

template <std::floating_point T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
    return linear(x, weight, bias);
}

template <std::floating_point T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng, Init init) {
    std::vector<T> w(in * out, T(0));
    if (init == Init::Uniform) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& v : w) {
            v = static_cast<T>(rng.uniform(-bound, bound));
        }
    }
    Linear<T> layer;
    layer.weight = store.add(name + ".weight", {in, out}, std::move(w));
    layer.bias = store.add(name + ".bias", {out}, std::vector<T>(out, T(0)));
    return layer;
}

namespace {

// [H*W x 9*C] patch matrix, zero outside the image.
template <class T>
std::vector<T> im2col(std::span<const T> image, std::size_t h, std::size_t w, std::size_t c) {
    std::vector<T> cols(h * w * 9 * c, T(0));
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            T* row = cols.data() + (y * w + x) * 9 * c;
            for (int ky = 0; ky < 3; ++ky) {
                const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                    continue;
                }
                for (int kx = 0; kx < 3; ++kx) {
                    const auto sx = static_cast<std::ptrdiff_t>(x) + kx - 1;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) {
                        continue;
                    }
                    std::copy_n(image.data() + (sy * static_cast<std::ptrdiff_t>(w) + sx) * c, c,
                                row + (ky * 3 + kx) * c);
                }
            }
        }
    }
    return cols;
}

} // namespace

template <std::floating_point T>
Tensor<T> conv3x3(const Tensor<T>& image, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (image.rank() != 3) {
        throw ContractViolation("conv3x3: expected [H x W x C] input, got " +
                                shape_string(image.shape()));
    }
    const auto h = image.dim(0);
    const auto w = image.dim(1);
    const auto cin = image.dim(2);
    if (weight.rank() != 2 || weight.dim(0) != 9 * cin || bias.numel() != weight.dim(1)) {
        throw ContractViolation("conv3x3: weight " + shape_string(weight.shape()) +
                                " does not match " + std::to_string(cin) + " input channels");
    }
    const auto cout = weight.dim(1);
    const auto pixels = h * w;
    auto cols = std::make_shared<std::vector<T>>(im2col<T>(image.data(), h, w, cin));

    std::vector<T> out(pixels * cout);
    dense::write<T>(dense::owned(cols->data(), pixels, 9 * cin) * dense::owned(weight.data().data(), 9 * cin, cout),
                    out.data(), false);
    dense::add_to_rows(out.data(), pixels, cout, bias.data().data());

    return make_result<T>(
        {h, w, cout}, std::move(out), {image, weight, bias},
        [cols, h, w, cin, cout, pixels](detail::Node<T>& node) {
            const auto gout = dense::owned(node.grad.data(), pixels, cout);
            if (T* gw = parent_grad(node, 1)) {
                dense::write<T>(dense::owned(cols->data(), pixels, 9 * cin, true) * gout, gw, true);
            }
            if (T* gb = parent_grad(node, 2)) {
                dense::add_column_sums(node.grad.data(), pixels, cout, gb);
            }
            if (T* gi = parent_grad(node, 0)) {
                const dense::RowMatrix<T> gcols =
                    gout * dense::owned(node.parents[1]->value.data(), 9 * cin, cout, true);
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const T* row = gcols.data() + (y * w + x) * 9 * cin;
                        for (int ky = 0; ky < 3; ++ky) {
                            const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
                            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            for (int kx = 0; kx < 3; ++kx) {
                                const auto sx = static_cast<std::ptrdiff_t>(x) + kx - 1;
                                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) {
                                    continue;
                                }
                                T* dst = gi + (sy * static_cast<std::ptrdiff_t>(w) + sx) * cin;
                                const T* src = row + (ky * 3 + kx) * cin;
                                for (std::size_t c = 0; c < cin; ++c) {
                                    dst[c] += src[c];
                                }
                            }
                        }
                    }
                }
            }
        });
}

template <std::floating_point T>
Conv3x3<T> make_conv3x3(ParameterStore<T>& store, const std::string& name, std::size_t in_channels,
                        std::size_t out_channels, Rng& rng) {
    const std::size_t fan_in = 9 * in_channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> w(fan_in * out_channels);
    for (auto& v : w) {
        v = static_cast<T>(rng.uniform(-bound, bound));
    }
    Conv3x3<T> conv;
    conv.weight = store.add(name + ".weight", {fan_in, out_channels}, std::move(w));
    conv.bias = store.add(name + ".bias", {out_channels}, std::vector<T>(out_channels, T(0)));
    return conv;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Linear<float>;
template struct Linear<double>;
template Linear<float> make_linear(ParameterStore<float>&, const std::string&, std::size_t,
                                   std::size_t, Rng&, Init);
template Linear<double> make_linear(ParameterStore<double>&, const std::string&, std::size_t,
                                    std::size_t, Rng&, Init);
template Tensor<float> conv3x3(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv3x3(const Tensor<double>&, const Tensor<double>&,
                                const Tensor<double>&);
template Conv3x3<float> make_conv3x3(ParameterStore<float>&, const std::string&, std::size_t,
                                     std::size_t, Rng&);
template Conv3x3<double> make_conv3x3(ParameterStore<double>&, const std::string&, std::size_t,
                                      std::size_t, Rng&);

} // namespace mmgs::ad
