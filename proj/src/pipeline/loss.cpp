#include "mmgs/pipeline/loss.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/pipeline/metrics.hpp"

#include <algorithm>
#include <iostream>
#include <vector>

namespace mmgs::pipeline {

void LossWeights::validate() const {
    if (l1 < 0 || ssim < 0 || lpips < 0) {
        throw ContractViolation("loss weights must be non-negative");
    }
    if (l1 + ssim <= 0) {
        throw ContractViolation("lambda_l1 + lambda_ssim must be positive");
    }
}

template <std::floating_point T>
LossTerms<T> render_loss(const ad::Tensor<T>& rendered, std::span<const T> target,
                         std::span<const std::uint8_t> mask, const LossWeights& weights,
                         const PerceptualLoss<T>& perceptual) {
    weights.validate();
    if (rendered.numel() != target.size() || target.size() != mask.size() * 3) {
        throw ContractViolation("render loss: rendered " + ad::shape_string(rendered.shape()) +
                                " does not match target and mask sizes");
    }
    LossTerms<T> out;
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
        std::cerr << "warning: empty loss mask, loss set to 0\n";
        out.total = ad::Tensor<T>::scalar(T(0));
        out.empty_mask = true;
        return out;
    }

    std::vector<ad::Tensor<T>> terms;
    const auto l1 = masked_l1(rendered, target, mask);
    out.l1 = l1.item();
    if (weights.l1 > 0) {
        terms.push_back(ad::scale(l1, static_cast<T>(weights.l1)));
    }
    if (weights.ssim > 0) {
        // Zero the background of the rendered image through the graph.
        std::vector<T> keep(rendered.numel());
        for (std::size_t p = 0; p < mask.size(); ++p) {
            std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(p * 3), 3, mask[p] ? T(1) : T(0));
        }
        const auto masked = ad::mul(rendered, ad::Tensor<T>(rendered.shape(), std::move(keep)));
        const auto target_black = composite_black(target, mask);
        const auto s = ssim(masked, std::span<const T>(target_black));
        out.ssim_term = 1.0 - static_cast<double>(s.item());
        terms.push_back(ad::scale(ad::add_scalar(s, T(-1)), static_cast<T>(-weights.ssim)));
    }
    if (weights.lpips > 0 && perceptual) {
        const auto p = perceptual(rendered, target);
        out.lpips_term = static_cast<double>(p.item());
        terms.push_back(ad::scale(p, static_cast<T>(weights.lpips)));
    }
    out.total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        out.total = ad::add(out.total, terms[i]);
    }
    return out;
}

template LossTerms<float> render_loss(const ad::Tensor<float>&, std::span<const float>,
                                      std::span<const std::uint8_t>, const LossWeights&,
                                      const PerceptualLoss<float>&);
template LossTerms<double> render_loss(const ad::Tensor<double>&, std::span<const double>,
                                       std::span<const std::uint8_t>, const LossWeights&,
                                       const PerceptualLoss<double>&);

} // namespace mmgs::pipeline
