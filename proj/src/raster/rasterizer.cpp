#include "mmgs/raster/rasterizer.hpp"

#include "composite.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/common/parallel.hpp"
#include "mmgs/gaussians/kernels.hpp"
#include "mmgs/gaussians/operations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmgs::raster {

namespace kern = gs::kernels;

namespace {

constexpr std::size_t kProjectChunk = 512;

enum class Outcome : std::uint8_t { Valid, Behind, Degenerate };

template <class T>
Outcome project_one(const gs::GaussianSet<T>& set, const kern::CameraParams<T>& cam,
                    const RasterSettings& settings, std::size_t i, ProjectedSet<T>& out) {
    const auto mu_row = set.centers.data().subspan(i * 3, 3);
    const kern::Vec3<T> mu{mu_row[0], mu_row[1], mu_row[2]};

    T depth = cam.t[2];
    for (int c = 0; c < 3; ++c) {
        depth += cam.R[6 + c] * mu[c];
    }
    out.depth[i] = depth;
    if (!(depth > static_cast<T>(settings.znear))) {
        return Outcome::Behind;
    }

    const auto q = set.rotation.data().subspan(i * 4, 4);
    const auto ls = set.log_scale.data().subspan(i * 3, 3);
    kern::Mat3<T> deformation{};
    const kern::Mat3<T>* deformation_ptr = nullptr;
    if (set.deformation.defined()) {
        const auto d = set.deformation.data().subspan(i * 9, 9);
        std::copy(d.begin(), d.end(), deformation.begin());
        deformation_ptr = &deformation;
    }
    const auto sigma = kern::covariance<T>({q[0], q[1], q[2], q[3]},
                                           {std::exp(ls[0]), std::exp(ls[1]), std::exp(ls[2])},
                                           deformation_ptr);
    const auto proj = kern::project<T, T>(mu, sigma, cam, static_cast<T>(settings.low_pass));
    const T det = proj.cov00 * proj.cov11 - proj.cov01 * proj.cov01;
    if (!(det > T(0)) || !std::isfinite(det) || !std::isfinite(proj.u) ||
        !std::isfinite(proj.v)) {
        return Outcome::Degenerate;
    }
    const auto conic = kern::conic_from(proj);
    out.u[i] = proj.u;
    out.v[i] = proj.v;
    for (int k = 0; k < 3; ++k) {
        out.conic[i * 3 + k] = conic[k];
    }
    out.cov[i * 3] = proj.cov00;
    out.cov[i * 3 + 1] = proj.cov01;
    out.cov[i * 3 + 2] = proj.cov11;

    // View-dependent color, direction from the camera center to the mean.
    T dir[3];
    T norm2 = T(0);
    for (int c = 0; c < 3; ++c) {
        dir[c] = mu[c] - cam.center[c];
        norm2 += dir[c] * dir[c];
    }
    const T inv_norm = T(1) / std::sqrt(norm2);
    T basis[16];
    kern::sh_basis(set.sh_degree, dir[0] * inv_norm, dir[1] * inv_norm, dir[2] * inv_norm, basis);
    const std::size_t nb = gs::sh_basis_count(set.sh_degree);
    const auto sh = set.sh.data().subspan(i * nb * 3, nb * 3);
    for (int c = 0; c < 3; ++c) {
        T raw = T(0.5);
        for (std::size_t b = 0; b < nb; ++b) {
            raw += basis[b] * sh[b * 3 + c];
        }
        out.raw_rgb[i * 3 + c] = raw;
        out.rgb[i * 3 + c] = std::clamp(raw, T(0), T(1));
    }

    const T alpha = T(1) / (T(1) + std::exp(-set.opacity_logit.data()[i]));
    out.alpha[i] = alpha;

    const T mid = T(0.5) * (proj.cov00 + proj.cov11);
    const T lambda_max = mid + std::sqrt(std::max(T(0), mid * mid - det));
    double k = settings.footprint_sigmas;
    if (static_cast<double>(alpha) > settings.cull_epsilon) {
        k = std::max(k, std::sqrt(2.0 * std::log(static_cast<double>(alpha) / settings.cull_epsilon)));
    }
    out.radius[i] = static_cast<T>(std::ceil(k * std::sqrt(static_cast<double>(lambda_max))));
    return Outcome::Valid;
}

} // namespace

template <std::floating_point T>
ProjectedSet<T> project_set(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                            const RasterSettings& settings) {
    set.validate();
    const std::size_t g = set.size();
    ProjectedSet<T> out;
    for (auto* vec : {&out.u, &out.v, &out.alpha, &out.depth, &out.radius}) {
        vec->assign(g, T(0));
    }
    for (auto* vec : {&out.conic, &out.cov, &out.rgb, &out.raw_rgb}) {
        vec->assign(g * 3, T(0));
    }
    out.valid.assign(g, 0);
    if (g == 0) {
        return out;
    }
    const auto cam = gs::camera_params<T>(camera);
    std::vector<Outcome> outcome(g);
    const std::size_t chunks = (g + kProjectChunk - 1) / kProjectChunk;
    parallel_for(chunks, settings.threads, [&](std::size_t chunk) {
        const std::size_t end = std::min(g, (chunk + 1) * kProjectChunk);
        for (std::size_t i = chunk * kProjectChunk; i < end; ++i) {
            outcome[i] = project_one(set, cam, settings, i, out);
        }
    });
    for (std::size_t i = 0; i < g; ++i) {
        out.valid[i] = outcome[i] == Outcome::Valid;
        out.stats.behind_camera += outcome[i] == Outcome::Behind;
        out.stats.degenerate += outcome[i] == Outcome::Degenerate;
    }
    return out;
}

template <std::floating_point T>
std::vector<std::uint32_t> depth_order(const ProjectedSet<T>& projected) {
    std::vector<std::uint32_t> order;
    order.reserve(projected.size());
    for (std::size_t i = 0; i < projected.size(); ++i) {
        if (projected.valid[i]) {
            order.push_back(static_cast<std::uint32_t>(i));
        }
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const T da = projected.depth[a], db = projected.depth[b];
        return da < db || (da == db && a < b);
    });
    return order;
}

template <std::floating_point T>
TileGrid build_tile_grid(const ProjectedSet<T>& projected, int width, int height,
                         const RasterSettings& settings) {
    if (settings.tile_size <= 0) {
        throw ContractViolation("tile size must be positive");
    }
    TileGrid grid;
    grid.tile_size = settings.tile_size;
    grid.tiles_x = (width + settings.tile_size - 1) / settings.tile_size;
    grid.tiles_y = (height + settings.tile_size - 1) / settings.tile_size;
    grid.lists.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);
    const auto order = depth_order(projected);
    for (const std::uint32_t i : order) {
        int tx0 = 0, ty0 = 0, tx1 = grid.tiles_x - 1, ty1 = grid.tiles_y - 1;
        if (settings.cull) {
            // Pixel centers sit at integer coordinates.
            const double r = projected.radius[i];
            const double xlo = std::max(0.0, std::ceil(projected.u[i] - r));
            const double xhi = std::min(width - 1.0, std::floor(projected.u[i] + r));
            const double ylo = std::max(0.0, std::ceil(projected.v[i] - r));
            const double yhi = std::min(height - 1.0, std::floor(projected.v[i] + r));
            if (xlo > xhi || ylo > yhi) {
                continue;
            }
            tx0 = static_cast<int>(xlo) / grid.tile_size;
            tx1 = static_cast<int>(xhi) / grid.tile_size;
            ty0 = static_cast<int>(ylo) / grid.tile_size;
            ty1 = static_cast<int>(yhi) / grid.tile_size;
        }
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) {
                grid.lists[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(i);
            }
        }
    }
    return grid;
}

template <std::floating_point T>
RenderedImage<T> rasterize(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                           const Background& background, const RasterSettings& settings,
                           RasterStats* stats) {
    camera.validate();
    const auto projected = project_set(set, camera, settings);
    const auto grid = build_tile_grid(projected, camera.width, camera.height, settings);
    RenderedImage<T> image;
    image.width = camera.width;
    image.height = camera.height;
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    image.pixels.assign(pixels * 3, T(0));
    image.alpha.assign(pixels, T(0));
    parallel_for(grid.tile_count(), settings.threads, [&](std::size_t tile) {
        detail::TileBatch<T> batch;
        batch.load(projected, grid.lists[tile]);
        detail::composite_tile(batch, detail::tile_rect(grid, tile, camera.width, camera.height),
                               camera.width, background, settings, image.pixels.data(),
                               image.alpha.data(), static_cast<T*>(nullptr),
                               static_cast<std::uint32_t*>(nullptr));
    });
    if (stats) {
        *stats = projected.stats;
    }
    return image;
}

namespace {

/// Straight per-pixel loop over the sorted list. `instance_of` may be empty.
template <class T>
void reference_composite(const ProjectedSet<T>& p, const std::vector<std::uint32_t>& order,
                         int width, int height, const Background& background,
                         const RasterSettings& settings, RenderedImage<T>* image,
                         std::span<const std::uint32_t> instance_of,
                         std::vector<std::vector<T>>* weights) {
    const T max_sigma = static_cast<T>(settings.max_sigma);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * width + x;
            T trans = T(1);
            T color[3] = {T(0), T(0), T(0)};
            for (const std::uint32_t i : order) {
                const T power = detail::gaussian_power(p.conic[i * 3], p.conic[i * 3 + 1],
                                                       p.conic[i * 3 + 2], static_cast<T>(x) - p.u[i],
                                                       static_cast<T>(y) - p.v[i]);
                const T sigma = std::min(max_sigma, p.alpha[i] * detail::gaussian_falloff(power));
                const T w = sigma * trans;
                for (int c = 0; c < 3; ++c) {
                    color[c] += p.rgb[i * 3 + c] * w;
                }
                if (weights) {
                    (*weights)[instance_of[i]][pix] += w;
                }
                trans *= T(1) - sigma;
            }
            if (image) {
                for (int c = 0; c < 3; ++c) {
                    image->pixels[pix * 3 + c] = color[c] + trans * static_cast<T>(background[c]);
                }
                image->alpha[pix] = T(1) - trans;
            }
        }
    }
}

} // namespace

template <std::floating_point T>
RenderedImage<T> rasterize_reference(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                                     const Background& background,
                                     const RasterSettings& settings) {
    camera.validate();
    const auto projected = project_set(set, camera, settings);
    RenderedImage<T> image;
    image.width = camera.width;
    image.height = camera.height;
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    image.pixels.assign(pixels * 3, T(0));
    image.alpha.assign(pixels, T(0));
    reference_composite(projected, depth_order(projected), camera.width, camera.height, background,
                        settings, &image, {}, static_cast<std::vector<std::vector<T>>*>(nullptr));
    return image;
}

template <std::floating_point T>
std::vector<std::vector<T>> instance_weights(const gs::GaussianSet<T>& set,
                                             const gs::Camera& camera,
                                             std::span<const std::uint32_t> instance_of,
                                             std::size_t instance_count,
                                             const RasterSettings& settings) {
    if (instance_of.size() != set.size()) {
        throw ContractViolation("instance_weights: one instance index per Gaussian required");
    }
    for (const auto id : instance_of) {
        if (id >= instance_count) {
            throw ContractViolation("instance_weights: instance index out of range");
        }
    }
    camera.validate();
    const auto projected = project_set(set, camera, settings);
    std::vector<std::vector<T>> weights(
        instance_count, std::vector<T>(static_cast<std::size_t>(camera.width) * camera.height, T(0)));
    reference_composite<T>(projected, depth_order(projected), camera.width, camera.height,
                           {0, 0, 0}, settings, nullptr, instance_of, &weights);
    return weights;
}

#define MMGS_INSTANTIATE_RASTER(T)                                                                 \
    template ProjectedSet<T> project_set(const gs::GaussianSet<T>&, const gs::Camera&,             \
                                         const RasterSettings&);                                   \
    template std::vector<std::uint32_t> depth_order(const ProjectedSet<T>&);                       \
    template TileGrid build_tile_grid(const ProjectedSet<T>&, int, int, const RasterSettings&);    \
    template RenderedImage<T> rasterize(const gs::GaussianSet<T>&, const gs::Camera&,              \
                                        const Background&, const RasterSettings&, RasterStats*);   \
    template RenderedImage<T> rasterize_reference(const gs::GaussianSet<T>&, const gs::Camera&,    \
                                                  const Background&, const RasterSettings&);       \
    template std::vector<std::vector<T>> instance_weights(                                         \
        const gs::GaussianSet<T>&, const gs::Camera&, std::span<const std::uint32_t>,              \
        std::size_t, const RasterSettings&);

MMGS_INSTANTIATE_RASTER(float)
MMGS_INSTANTIATE_RASTER(double)

} // namespace mmgs::raster
