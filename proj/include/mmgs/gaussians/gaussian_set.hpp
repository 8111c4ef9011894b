#pragma once

#include "mmgs/ad/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mmgs::gs {

/// Number of SH basis functions per color channel for degree L.
constexpr std::size_t sh_basis_count(int degree) {
    return static_cast<std::size_t>((degree + 1) * (degree + 1));
}

/// Attributes of G Gaussians. Each field is a graph tensor so a set can be
/// produced by differentiable refinement stages and rendered directly.
///
/// Activations: opacity = sigmoid(opacity_logit), scale = exp(log_scale).
/// Quaternions are (w, x, y, z) and renormalized wherever they are consumed.
/// `deformation` is an optional per-Gaussian 3x3 linear map L (row-major)
/// applied to the covariance as L R S S R^T L^T; undefined means identity.
template <std::floating_point T>
struct GaussianSet {
    int sh_degree = 1;
    ad::Tensor<T> centers;       // [G x 3]
    ad::Tensor<T> sh;            // [G x 3B], per Gaussian B rows of rgb
    ad::Tensor<T> opacity_logit; // [G x 1]
    ad::Tensor<T> rotation;      // [G x 4]
    ad::Tensor<T> log_scale;     // [G x 3]
    ad::Tensor<T> deformation;   // [G x 9] or undefined

    std::size_t size() const { return centers.defined() ? centers.dim(0) : 0; }
    bool empty() const { return size() == 0; }

    /// Checks shapes and quaternion norms; throws ContractViolation.
    void validate() const;

    /// Plain-valued copy with every tensor detached from its graph.
    GaussianSet detached() const;
};

/// Plain-data Gaussian set construction (leaves without gradients).
template <std::floating_point T>
GaussianSet<T> make_gaussian_set(int sh_degree, std::vector<T> centers, std::vector<T> sh,
                                 std::vector<T> opacity_logit, std::vector<T> rotation,
                                 std::vector<T> log_scale, std::vector<T> deformation = {});

/// Differentiable concatenation; sets without deformation contribute identity.
template <std::floating_point T>
GaussianSet<T> concat(std::span<const GaussianSet<T>> sets);

} // namespace mmgs::gs
