#pragma once

#include "mmgs/ad/tensor.hpp"
#include "mmgs/gaussians/camera.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmgs::raster {

struct RasterSettings {
    int tile_size = 16;
    bool cull = true;       // restrict each Gaussian to the tiles its footprint touches
    bool early_stop = true; // stop a pixel once transmittance drops below the cutoff
    double transmittance_cutoff = 1e-4;
    double max_sigma = 0.99;
    double low_pass = 0.3;
    double znear = 0.01;
    // Footprint half-width in standard deviations along the major axis. It is
    // widened to sqrt(2 ln(alpha / cull_epsilon)) for opaque Gaussians so the
    // cut-off tail never exceeds cull_epsilon in sigma.
    double footprint_sigmas = 3.0;
    double cull_epsilon = 1e-4;
    int threads = 1;
};

template <std::floating_point T>
struct RenderedImage {
    int width = 0;
    int height = 0;
    std::vector<T> pixels; // [H x W x 3]
    std::vector<T> alpha;  // [H x W]

    T pixel(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    T alpha_at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }
};

struct RasterStats {
    std::size_t behind_camera = 0;
    std::size_t degenerate = 0; // non-invertible screen covariance, skipped
};

/// Per-Gaussian screen-space quantities for one camera.
template <std::floating_point T>
struct ProjectedSet {
    std::vector<T> u, v;       // pixel-space mean
    std::vector<T> conic;      // [G x 3] inverse covariance (a, b, c)
    std::vector<T> cov;        // [G x 3] screen covariance (00, 01, 11)
    std::vector<T> rgb;        // [G x 3] clamped SH color
    std::vector<T> raw_rgb;    // [G x 3] before clamping
    std::vector<T> alpha;      // opacity
    std::vector<T> depth;      // camera-space z
    std::vector<T> radius;     // tile-binning half-width in pixels
    std::vector<std::uint8_t> valid;
    RasterStats stats;

    std::size_t size() const { return u.size(); }
};

template <std::floating_point T>
ProjectedSet<T> project_set(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                            const RasterSettings& settings);

/// Indices of valid Gaussians sorted by (depth, index).
template <std::floating_point T>
std::vector<std::uint32_t> depth_order(const ProjectedSet<T>& projected);

struct TileGrid {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists; // row-major tiles, depth-sorted

    const std::vector<std::uint32_t>& tile(int tx, int ty) const {
        return lists[static_cast<std::size_t>(ty) * tiles_x + tx];
    }
    std::size_t tile_count() const { return lists.size(); }
};

/// Bins valid Gaussians into tiles. With culling disabled every tile lists
/// every valid Gaussian.
template <std::floating_point T>
TileGrid build_tile_grid(const ProjectedSet<T>& projected, int width, int height,
                         const RasterSettings& settings);

using Background = std::array<double, 3>;

/// Tiled front-to-back compositing.
template <std::floating_point T>
RenderedImage<T> rasterize(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                           const Background& background = {0, 0, 0},
                           const RasterSettings& settings = {}, RasterStats* stats = nullptr);

/// Per-pixel compositing over the full depth-sorted list with no culling and
/// no early termination.
template <std::floating_point T>
RenderedImage<T> rasterize_reference(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                                     const Background& background = {0, 0, 0},
                                     const RasterSettings& settings = {});

/// Reference compositing that also accumulates the blending weight of each
/// instance: result[i][y * W + x] = sum over Gaussians of instance i of
/// sigma_k * T_k. `instance_of` maps each Gaussian to an instance index.
template <std::floating_point T>
std::vector<std::vector<T>> instance_weights(const gs::GaussianSet<T>& set,
                                             const gs::Camera& camera,
                                             std::span<const std::uint32_t> instance_of,
                                             std::size_t instance_count,
                                             const RasterSettings& settings = {});

template <std::floating_point T>
struct RenderOutput {
    ad::Tensor<T> image;  // [H x W x 3], differentiable w.r.t. every attribute tensor
    std::vector<T> alpha; // [H x W]
    RasterStats stats;
};

/// Differentiable tiled render. Gradients reach centers, sh, opacity_logit,
/// rotation, log_scale and deformation of `set`.
template <std::floating_point T>
RenderOutput<T> render(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                       const Background& background = {0, 0, 0},
                       const RasterSettings& settings = {});

} // namespace mmgs::raster
