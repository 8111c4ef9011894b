#pragma once

// Compositing kernels shared by the forward renderers and the backward pass.

#include "mmgs/raster/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace mmgs::raster::detail {

template <class T>
inline T gaussian_power(T a, T b, T c, T dx, T dy) {
    return T(-0.5) * (a * dx * dx + c * dy * dy) - b * dx * dy;
}

/// exp(power), flushed to zero below e^-60 so single precision never enters
/// the denormal range.
template <class T>
inline T gaussian_falloff(T power) {
    return power < T(-60) ? T(0) : std::exp(power);
}

/// Structure-of-arrays copy of one tile's Gaussians in list order.
template <class T>
struct TileBatch {
    std::vector<T> u, v, a, b, c, alpha, r, g, bl;

    void load(const ProjectedSet<T>& p, const std::vector<std::uint32_t>& list) {
        const std::size_t n = list.size();
        for (auto* vec : {&u, &v, &a, &b, &c, &alpha, &r, &g, &bl}) {
            vec->resize(n);
        }
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = list[k];
            u[k] = p.u[i];
            v[k] = p.v[i];
            a[k] = p.conic[i * 3];
            b[k] = p.conic[i * 3 + 1];
            c[k] = p.conic[i * 3 + 2];
            alpha[k] = p.alpha[i];
            r[k] = p.rgb[i * 3];
            g[k] = p.rgb[i * 3 + 1];
            bl[k] = p.rgb[i * 3 + 2];
        }
    }
    std::size_t size() const { return u.size(); }
};

struct TileRect {
    int x0, y0, x1, y1; // half-open pixel bounds
};

inline TileRect tile_rect(const TileGrid& grid, std::size_t tile, int width, int height) {
    const int tx = static_cast<int>(tile % grid.tiles_x);
    const int ty = static_cast<int>(tile / grid.tiles_x);
    return {tx * grid.tile_size, ty * grid.tile_size,
            std::min(width, (tx + 1) * grid.tile_size), std::min(height, (ty + 1) * grid.tile_size)};
}

/// Front-to-back compositing of one tile. Writes color, alpha, the final
/// transmittance and the number of list entries consumed for each pixel.
template <class T>
void composite_tile(const TileBatch<T>& batch, const TileRect& rect, int width,
                    const Background& background, const RasterSettings& settings, T* pixels,
                    T* alpha, T* t_final, std::uint32_t* n_contrib) {
    const T max_sigma = static_cast<T>(settings.max_sigma);
    const T cutoff = static_cast<T>(settings.transmittance_cutoff);
    const std::size_t n = batch.size();
    for (int y = rect.y0; y < rect.y1; ++y) {
        for (int x = rect.x0; x < rect.x1; ++x) {
            const T px = static_cast<T>(x), py = static_cast<T>(y);
            T trans = T(1), cr = T(0), cg = T(0), cb = T(0);
            std::uint32_t used = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const T power = gaussian_power(batch.a[k], batch.b[k], batch.c[k],
                                               px - batch.u[k], py - batch.v[k]);
                const T sigma = std::min(max_sigma, batch.alpha[k] * gaussian_falloff(power));
                const T w = sigma * trans;
                cr += batch.r[k] * w;
                cg += batch.g[k] * w;
                cb += batch.bl[k] * w;
                trans *= T(1) - sigma;
                used = static_cast<std::uint32_t>(k + 1);
                if (settings.early_stop && trans < cutoff) {
                    break;
                }
            }
            const std::size_t pix = static_cast<std::size_t>(y) * width + x;
            pixels[pix * 3] = cr + trans * static_cast<T>(background[0]);
            pixels[pix * 3 + 1] = cg + trans * static_cast<T>(background[1]);
            pixels[pix * 3 + 2] = cb + trans * static_cast<T>(background[2]);
            alpha[pix] = T(1) - trans;
            if (t_final) {
                t_final[pix] = trans;
            }
            if (n_contrib) {
                n_contrib[pix] = used;
            }
        }
    }
}

} // namespace mmgs::raster::detail
