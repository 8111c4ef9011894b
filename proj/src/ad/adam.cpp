#include "mmgs/ad/adam.hpp"

#include "mmgs/common/error.hpp"

#include <cmath>

namespace mmgs::ad {

template <std::floating_point T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            const auto& name = params[i].name();
            throw ContractViolation("adam_step: parameter '" +
                                    (name.empty() ? "#" + std::to_string(i) : name) +
                                    "' has no gradient");
        }
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), T(0));
            state.second_moment.emplace_back(p.numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ContractViolation("adam_step: parameter count changed between steps");
    }

    const auto& cfg = state.config;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const T step_size = static_cast<T>(cfg.lr / (1.0 - std::pow(cfg.beta1, t)));
    const T bias2_sqrt = static_cast<T>(std::sqrt(1.0 - std::pow(cfg.beta2, t)));
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T eps = static_cast<T>(cfg.eps);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != p.numel()) {
            throw ContractViolation("adam_step: moment shape mismatch for '" + p.name() + "'");
        }
        const auto g = p.grad();
        auto x = p.mutable_data();
        for (std::size_t k = 0; k < x.size(); ++k) {
            m[k] = b1 * m[k] + (T(1) - b1) * g[k];
            v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
            x[k] -= step_size * m[k] / (std::sqrt(v[k]) / bias2_sqrt + eps);
        }
        p.clear_grad();
    }
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

} // namespace mmgs::ad
