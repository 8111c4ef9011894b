#pragma once

#include "mmgs/ad/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mmgs::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <std::floating_point T>
struct AdamState {
    AdamConfig config;
    std::size_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

/// One bias-corrected Adam update over `params`, which must all carry a
/// gradient. Gradients are cleared afterwards. The parameter list must be the
/// same (same order, same shapes) on every call with a given state.
template <std::floating_point T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

} // namespace mmgs::ad
