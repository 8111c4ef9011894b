#pragma once

#include "mmgs/ad/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>

namespace mmgs::pipeline {

struct LossWeights {
    double l1 = 0.8;
    double ssim = 0.2;
    double lpips = 0.0;

    /// Throws ContractViolation for negative weights or l1 + ssim == 0.
    void validate() const;
};

/// Perceptual term hook: (rendered [H x W x 3], target) -> differentiable scalar.
template <std::floating_point T>
using PerceptualLoss = std::function<ad::Tensor<T>(const ad::Tensor<T>&, std::span<const T>)>;

template <std::floating_point T>
struct LossTerms {
    ad::Tensor<T> total; // [1]
    double l1 = 0;
    double ssim_term = 0;  // 1 - SSIM
    double lpips_term = 0;
    bool empty_mask = false;
};

/// l1 * masked L1 + ssim * (1 - SSIM of the black-composited pair)
/// + lpips * perceptual. The perceptual term is skipped when no hook is given.
/// An empty mask yields a constant zero loss and a warning on stderr.
template <std::floating_point T>
LossTerms<T> render_loss(const ad::Tensor<T>& rendered, std::span<const T> target,
                         std::span<const std::uint8_t> mask, const LossWeights& weights,
                         const PerceptualLoss<T>& perceptual = {});

} // namespace mmgs::pipeline
