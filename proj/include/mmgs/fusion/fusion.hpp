#pragma once

#include "mmgs/ad/nn.hpp"
#include "mmgs/ad/tensor.hpp"
#include "mmgs/gaussians/camera.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmgs::fusion {

struct FusionConfig {
    double gamma = 0.1;
    std::size_t context_views = 4;
    std::size_t instance_feature_dim = 64;
    std::size_t feature_channels = 32;
    std::size_t hidden1 = 128;
    std::size_t hidden2 = 64;
    // Residual color updates reach every SH band; false restricts them to band 0.
    bool update_all_sh_bands = true;
    // Per-Gaussian view sets from in-bounds projection instead of the
    // instance-level context set.
    bool per_gaussian_visibility = false;
};

/// Three 3x3 convolutions 3 -> 16 -> 32 -> C, ReLU after the first two.
template <std::floating_point T>
struct ImageEncoder {
    ad::Conv3x3<T> conv1, conv2, conv3;

    ad::Tensor<T> operator()(const ad::Tensor<T>& image) const;
};

template <std::floating_point T>
ImageEncoder<T> make_image_encoder(ad::ParameterStore<T>& store, const std::string& name,
                                   std::size_t channels, Rng& rng);

/// [H x W x 3] image in [0, 1] -> [H x W x C] feature map.
template <std::floating_point T>
ad::Tensor<T> encode_image(const ImageEncoder<T>& encoder, const ad::Tensor<T>& image);

/// Bilinear sample of `feature_map` [H x W x C] at the pinhole projection of
/// each center [G x 3]. Centers behind the near plane or projecting outside
/// [0, W-1] x [0, H-1] get zeros. Differentiable w.r.t. both inputs.
template <std::floating_point T>
ad::Tensor<T> lift_features(const ad::Tensor<T>& feature_map, const ad::Tensor<T>& centers,
                            const gs::Camera& camera);

/// 1 where a center projects inside the image in front of the camera.
template <std::floating_point T>
std::vector<std::uint8_t> in_view(const ad::Tensor<T>& centers, const gs::Camera& camera);

struct ViewArea {
    int camera_id = 0;
    std::size_t mask_pixels = 0;
};

struct ContextSelection {
    std::vector<int> camera_ids;
    bool invisible = false; // no view showed the instance
};

/// Views ranked by mask area (descending, ties by camera id), truncated to
/// `count`. Views with zero area follow in id order.
ContextSelection select_context_views(std::span<const ViewArea> areas, std::size_t count);

/// Coefficient matrix of the fusion rule: entry [j][p] weighs view p's
/// feature inside view j's term, including the 1 / (N Z) factor.
std::vector<std::vector<double>> fusion_coefficients(std::size_t views, double gamma);

/// (1 / N) sum_j (1 / Z) (f_j + gamma sum_{p != j} f_p), Z = 1 + gamma (N - 1).
template <std::floating_point T>
ad::Tensor<T> cross_view_fuse(std::span<const ad::Tensor<T>> per_view, double gamma);

/// Same rule with a per-Gaussian view set: `visible[j][g]` selects the views
/// that take part for Gaussian g. Gaussians visible nowhere fall back to all
/// views.
template <std::floating_point T>
ad::Tensor<T> cross_view_fuse_visible(std::span<const ad::Tensor<T>> per_view,
                                      const std::vector<std::vector<std::uint8_t>>& visible,
                                      double gamma);

/// [f_vis | c | alpha | unit r | s] per Gaussian.
template <std::floating_point T>
ad::Tensor<T> view_dependent_features(const ad::Tensor<T>& lifted, const gs::GaussianSet<T>& set);

std::size_t view_dependent_dim(const FusionConfig& config, int sh_degree);

template <std::floating_point T>
struct FusionDecoder {
    ad::Linear<T> trunk1, trunk2;
    ad::Linear<T> delta_head;   // zero-initialized
    ad::Linear<T> feature_head; // per-Gaussian instance-feature contribution
    bool update_all_sh_bands = true;
};

template <std::floating_point T>
FusionDecoder<T> make_fusion_decoder(ad::ParameterStore<T>& store, const std::string& name,
                                     const FusionConfig& config, int sh_degree, Rng& rng);

template <std::floating_point T>
struct FusionResult {
    gs::GaussianSet<T> refined;      // centers and deformation shared with the input
    ad::Tensor<T> instance_feature;  // [1 x 64]
    ad::Tensor<T> deltas;            // [G x (3B + 8)]
};

/// Residual updates from fused features, applied to `initial`.
template <std::floating_point T>
FusionResult<T> decode_fusion(const FusionDecoder<T>& decoder, const ad::Tensor<T>& fused,
                              const gs::GaussianSet<T>& initial);

} // namespace mmgs::fusion
