#include "mmgs/raster/rasterizer.hpp"

#include "composite.hpp"
#include "mmgs/ad/dual.hpp"
#include "mmgs/common/parallel.hpp"
#include "mmgs/gaussians/kernels.hpp"
#include "mmgs/gaussians/operations.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace mmgs::raster {

namespace kern = gs::kernels;

namespace {

// Gradient slots accumulated per (tile, list entry) and per Gaussian.
enum Slot { kU, kV, kConicA, kConicB, kConicC, kR, kG, kB, kAlpha, kSlotCount };

enum Input { kCenters, kSh, kOpacity, kRotation, kLogScale, kDeformation };

// Forward-mode variables of the geometric chain: mu, q, log_scale, deformation.
constexpr std::size_t kGeomVars = 19;

template <class T>
struct RenderContext {
    ProjectedSet<T> projected;
    TileGrid grid;
    std::vector<std::uint32_t> n_contrib;
    kern::CameraParams<T> cam;
    RasterSettings settings;
    Background background{};
    int sh_degree = 1;
    bool has_deformation = false;
};

/// Screen-space gradients for one tile, one row of kSlotCount per list entry.
template <class T>
void tile_backward(const RenderContext<T>& ctx, std::size_t tile, const T* grad_image,
                   std::vector<T>& slots) {
    const auto& list = ctx.grid.lists[tile];
    slots.assign(list.size() * kSlotCount, T(0));
    if (list.empty()) {
        return;
    }
    const int width = ctx.cam.width;
    const auto rect = detail::tile_rect(ctx.grid, tile, width, ctx.cam.height);
    detail::TileBatch<T> batch;
    batch.load(ctx.projected, list);
    const T max_sigma = static_cast<T>(ctx.settings.max_sigma);

    std::vector<T> sigma(list.size()), trans(list.size()), gauss(list.size());
    for (int y = rect.y0; y < rect.y1; ++y) {
        for (int x = rect.x0; x < rect.x1; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * width + x;
            const T g[3] = {grad_image[pix * 3], grad_image[pix * 3 + 1], grad_image[pix * 3 + 2]};
            const std::size_t n = ctx.n_contrib[pix];
            if (n == 0 || (g[0] == T(0) && g[1] == T(0) && g[2] == T(0))) {
                continue;
            }
            const T px = static_cast<T>(x), py = static_cast<T>(y);
            T t = T(1);
            for (std::size_t k = 0; k < n; ++k) {
                gauss[k] = detail::gaussian_falloff(detail::gaussian_power(batch.a[k], batch.b[k], batch.c[k],
                                                           px - batch.u[k], py - batch.v[k]));
                sigma[k] = std::min(max_sigma, batch.alpha[k] * gauss[k]);
                trans[k] = t;
                t *= T(1) - sigma[k];
            }
            T acc[3] = {static_cast<T>(ctx.background[0]), static_cast<T>(ctx.background[1]),
                        static_cast<T>(ctx.background[2])};
            for (std::size_t k = n; k-- > 0;) {
                T* s = &slots[k * kSlotCount];
                const T rgb[3] = {batch.r[k], batch.g[k], batch.bl[k]};
                const T w = sigma[k] * trans[k];
                T dsigma = T(0);
                for (int c = 0; c < 3; ++c) {
                    s[kR + c] += g[c] * w;
                    dsigma += g[c] * (rgb[c] - acc[c]);
                    acc[c] = sigma[k] * rgb[c] + (T(1) - sigma[k]) * acc[c];
                }
                dsigma *= trans[k];
                if (batch.alpha[k] * gauss[k] > max_sigma) {
                    continue; // clamped
                }
                s[kAlpha] += gauss[k] * dsigma;
                const T dpower = batch.alpha[k] * dsigma * gauss[k];
                const T dx = px - batch.u[k], dy = py - batch.v[k];
                s[kU] += dpower * (batch.a[k] * dx + batch.b[k] * dy);
                s[kV] += dpower * (batch.b[k] * dx + batch.c[k] * dy);
                s[kConicA] += T(-0.5) * dpower * dx * dx;
                s[kConicB] -= dpower * dx * dy;
                s[kConicC] += T(-0.5) * dpower * dy * dy;
            }
        }
    }
}

struct ParentGrads {
    template <class T>
    static std::array<T*, 6> collect(ad::detail::Node<T>& node) {
        std::array<T*, 6> out{};
        for (std::size_t i = 0; i < node.parents.size(); ++i) {
            out[i] = ad::parent_grad(node, i);
        }
        return out;
    }
};

/// Chain rule from screen-space gradients to the attribute tensors for one
/// Gaussian, via forward-mode duals.
template <class T>
void gaussian_backward(const RenderContext<T>& ctx, ad::detail::Node<T>& node, std::size_t i,
                       const T* d, const std::array<T*, 6>& out) {
    const auto& centers = node.parents[kCenters]->value;
    const std::size_t nb = gs::sh_basis_count(ctx.sh_degree);

    if (out[kCenters] || out[kRotation] || out[kLogScale] || (ctx.has_deformation && out[kDeformation])) {
        const bool geometric = d[kU] != T(0) || d[kV] != T(0) || d[kConicA] != T(0) ||
                               d[kConicB] != T(0) || d[kConicC] != T(0);
        if (geometric) {
            using D = ad::Dual<T, kGeomVars>;
            const auto& rot = node.parents[kRotation]->value;
            const auto& ls = node.parents[kLogScale]->value;
            kern::Vec3<D> mu;
            kern::Vec3<D> scale;
            std::array<D, 4> q;
            for (std::size_t c = 0; c < 3; ++c) {
                mu[c] = D::variable(centers[i * 3 + c], c);
                scale[c] = ad::exp(D::variable(ls[i * 3 + c], 7 + c));
            }
            for (std::size_t c = 0; c < 4; ++c) {
                q[c] = D::variable(rot[i * 4 + c], 3 + c);
            }
            kern::Mat3<D> deformation;
            if (ctx.has_deformation) {
                const auto& def = node.parents[kDeformation]->value;
                for (std::size_t c = 0; c < 9; ++c) {
                    deformation[c] = D::variable(def[i * 9 + c], 10 + c);
                }
            }
            const auto sigma =
                kern::covariance<D>(q, scale, ctx.has_deformation ? &deformation : nullptr);
            const auto proj = kern::project<D, T>(mu, sigma, ctx.cam,
                                                  static_cast<T>(ctx.settings.low_pass));
            const auto conic = kern::conic_from(proj);
            std::array<T, kGeomVars> grad{};
            for (std::size_t v = 0; v < kGeomVars; ++v) {
                grad[v] = d[kU] * proj.u.d[v] + d[kV] * proj.v.d[v] + d[kConicA] * conic[0].d[v] +
                          d[kConicB] * conic[1].d[v] + d[kConicC] * conic[2].d[v];
            }
            for (std::size_t c = 0; c < 3; ++c) {
                if (out[kCenters]) out[kCenters][i * 3 + c] += grad[c];
                if (out[kLogScale]) out[kLogScale][i * 3 + c] += grad[7 + c];
            }
            for (std::size_t c = 0; c < 4; ++c) {
                if (out[kRotation]) out[kRotation][i * 4 + c] += grad[3 + c];
            }
            if (ctx.has_deformation && out[kDeformation]) {
                for (std::size_t c = 0; c < 9; ++c) {
                    out[kDeformation][i * 9 + c] += grad[10 + c];
                }
            }
        }
    }

    // Color: clamped channels pass no gradient.
    T drgb[3];
    bool any_color = false;
    for (int c = 0; c < 3; ++c) {
        const T raw = ctx.projected.raw_rgb[i * 3 + c];
        drgb[c] = (raw < T(0) || raw > T(1)) ? T(0) : d[kR + c];
        any_color = any_color || drgb[c] != T(0);
    }
    if (any_color && (out[kSh] || out[kCenters])) {
        using D3 = ad::Dual<T, 3>;
        D3 dir[3];
        D3 norm2(T(0));
        for (std::size_t c = 0; c < 3; ++c) {
            dir[c] = D3::variable(centers[i * 3 + c], c) - D3(ctx.cam.center[c]);
            norm2 += dir[c] * dir[c];
        }
        const D3 norm = ad::sqrt(norm2);
        D3 basis[16];
        kern::sh_basis(ctx.sh_degree, dir[0] / norm, dir[1] / norm, dir[2] / norm, basis);
        const auto& sh = node.parents[kSh]->value;
        for (std::size_t b = 0; b < nb; ++b) {
            for (int c = 0; c < 3; ++c) {
                if (out[kSh]) {
                    out[kSh][(i * nb + b) * 3 + c] += drgb[c] * basis[b].v;
                }
                if (out[kCenters] && b > 0) {
                    const T coeff = drgb[c] * sh[(i * nb + b) * 3 + c];
                    for (std::size_t k = 0; k < 3; ++k) {
                        out[kCenters][i * 3 + k] += coeff * basis[b].d[k];
                    }
                }
            }
        }
    }

    if (out[kOpacity]) {
        const T alpha = ctx.projected.alpha[i];
        out[kOpacity][i] += d[kAlpha] * alpha * (T(1) - alpha);
    }
}

} // namespace

template <std::floating_point T>
RenderOutput<T> render(const gs::GaussianSet<T>& set, const gs::Camera& camera,
                       const Background& background, const RasterSettings& settings) {
    camera.validate();
    auto ctx = std::make_shared<RenderContext<T>>();
    ctx->projected = project_set(set, camera, settings);
    ctx->grid = build_tile_grid(ctx->projected, camera.width, camera.height, settings);
    ctx->cam = gs::camera_params<T>(camera);
    ctx->settings = settings;
    ctx->background = background;
    ctx->sh_degree = set.sh_degree;
    ctx->has_deformation = set.deformation.defined();

    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    std::vector<T> image(pixels * 3, T(0));
    RenderOutput<T> out;
    out.alpha.assign(pixels, T(0));
    out.stats = ctx->projected.stats;
    std::vector<T> t_final(pixels, T(1));
    ctx->n_contrib.assign(pixels, 0);
    parallel_for(ctx->grid.tile_count(), settings.threads, [&](std::size_t tile) {
        detail::TileBatch<T> batch;
        batch.load(ctx->projected, ctx->grid.lists[tile]);
        detail::composite_tile(batch, detail::tile_rect(ctx->grid, tile, camera.width, camera.height),
                               camera.width, background, settings, image.data(), out.alpha.data(),
                               t_final.data(), ctx->n_contrib.data());
    });

    const ad::Shape shape{static_cast<std::size_t>(camera.height),
                          static_cast<std::size_t>(camera.width), 3};
    if (set.empty()) {
        out.image = ad::Tensor<T>(shape, std::move(image));
        return out;
    }
    std::vector<ad::Tensor<T>> inputs{set.centers, set.sh, set.opacity_logit, set.rotation,
                                      set.log_scale};
    if (ctx->has_deformation) {
        inputs.push_back(set.deformation);
    }
    out.image = ad::make_result<T>(shape, std::move(image), inputs, [ctx](ad::detail::Node<T>& node) {
        const T* grad_image = node.grad.data();
        const auto& grid = ctx->grid;
        std::vector<std::vector<T>> slots(grid.tile_count());
        parallel_for(grid.tile_count(), ctx->settings.threads, [&](std::size_t tile) {
            tile_backward(*ctx, tile, grad_image, slots[tile]);
        });
        // Fixed tile order keeps the reduction independent of thread count.
        const std::size_t g = ctx->projected.size();
        std::vector<T> per_gaussian(g * kSlotCount, T(0));
        for (std::size_t tile = 0; tile < grid.tile_count(); ++tile) {
            const auto& list = grid.lists[tile];
            for (std::size_t k = 0; k < list.size(); ++k) {
                T* dst = &per_gaussian[list[k] * kSlotCount];
                const T* src = &slots[tile][k * kSlotCount];
                for (int s = 0; s < kSlotCount; ++s) {
                    dst[s] += src[s];
                }
            }
        }
        const auto targets = ParentGrads::collect(node);
        parallel_for(g, ctx->settings.threads, [&](std::size_t i) {
            if (ctx->projected.valid[i]) {
                gaussian_backward(*ctx, node, i, &per_gaussian[i * kSlotCount], targets);
            }
        });
    });
    return out;
}

template RenderOutput<float> render(const gs::GaussianSet<float>&, const gs::Camera&,
                                    const Background&, const RasterSettings&);
template RenderOutput<double> render(const gs::GaussianSet<double>&, const gs::Camera&,
                                     const Background&, const RasterSettings&);

} // namespace mmgs::raster
