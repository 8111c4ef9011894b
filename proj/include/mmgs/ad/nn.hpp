#pragma once

#include "mmgs/ad/tensor.hpp"
#include "mmgs/common/rng.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace mmgs::ad {

/// Ordered, named collection of trainable leaf tensors.
template <std::floating_point T>
class ParameterStore {
public:
    Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values);

    /// Throws if the name is unknown.
    const Tensor<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<Tensor<T>>& parameters() const { return params_; }
    std::vector<Tensor<T>>& parameters() { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

private:
    std::vector<Tensor<T>> params_;
};

enum class Init {
    Uniform, ///< U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias
    Zero,    ///< all zeros; used for residual heads
};

template <std::floating_point T>
struct Linear {
    Tensor<T> weight; // [in x out]
    Tensor<T> bias;   // [out]

    Tensor<T> operator()(const Tensor<T>& x) const;
    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
};

template <std::floating_point T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng, Init init = Init::Uniform);

/// 3x3 convolution, stride 1, zero padding 1, over an [H x W x C_in] image.
/// weight is [9*C_in x C_out] with rows ordered (ky, kx, c_in).
template <std::floating_point T>
Tensor<T> conv3x3(const Tensor<T>& image, const Tensor<T>& weight, const Tensor<T>& bias);

template <std::floating_point T>
struct Conv3x3 {
    Tensor<T> weight;
    Tensor<T> bias;

    Tensor<T> operator()(const Tensor<T>& image) const { return conv3x3(image, weight, bias); }
};

template <std::floating_point T>
Conv3x3<T> make_conv3x3(ParameterStore<T>& store, const std::string& name, std::size_t in_channels,
                        std::size_t out_channels, Rng& rng);

} // namespace mmgs::ad
