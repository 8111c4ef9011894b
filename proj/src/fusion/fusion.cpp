#include "mmgs/fusion/fusion.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/gaussians/operations.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace mmgs::fusion {

template <std::floating_point T>
ad::Tensor<T> ImageEncoder<T>::operator()(const ad::Tensor<T>& image) const {
    return conv3(ad::relu(conv2(ad::relu(conv1(image)))));
}

template <std::floating_point T>
ImageEncoder<T> make_image_encoder(ad::ParameterStore<T>& store, const std::string& name,
                                   std::size_t channels, Rng& rng) {
    return {ad::make_conv3x3(store, name + ".conv1", 3, 16, rng),
            ad::make_conv3x3(store, name + ".conv2", 16, 32, rng),
            ad::make_conv3x3(store, name + ".conv3", 32, channels, rng)};
}

template <std::floating_point T>
ad::Tensor<T> encode_image(const ImageEncoder<T>& encoder, const ad::Tensor<T>& image) {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw ContractViolation("encode_image expects an H x W x 3 image, got " +
                                ad::shape_string(image.shape()));
    }
    return encoder(image);
}

namespace {

struct PixelProjection {
    bool inside = false;
    double u = 0, v = 0;
    // d(u, v) / d(center), rows u and v.
    double du[3] = {0, 0, 0};
    double dv[3] = {0, 0, 0};
};

PixelProjection project_center(const gs::Camera& cam, const double* mu) {
    PixelProjection out;
    const Eigen::Vector3d p = cam.to_camera(Eigen::Vector3d(mu[0], mu[1], mu[2]));
    if (!(p.z() > gs::kNearPlane)) {
        return out;
    }
    const double inv_z = 1.0 / p.z();
    const double a = (cam.fx() * p.x() + cam.K(0, 1) * p.y()) * inv_z;
    const double b = cam.fy() * p.y() * inv_z;
    out.u = a + cam.cx();
    out.v = b + cam.cy();
    out.inside = out.u >= 0.0 && out.u <= cam.width - 1.0 && out.v >= 0.0 && out.v <= cam.height - 1.0;
    const Eigen::Vector3d du_dp(cam.fx() * inv_z, cam.K(0, 1) * inv_z, -a * inv_z);
    const Eigen::Vector3d dv_dp(0.0, cam.fy() * inv_z, -b * inv_z);
    const Eigen::Vector3d du = cam.R.transpose() * du_dp;
    const Eigen::Vector3d dv = cam.R.transpose() * dv_dp;
    for (int c = 0; c < 3; ++c) {
        out.du[c] = du[c];
        out.dv[c] = dv[c];
    }
    return out;
}

struct BilinearTaps {
    std::size_t i00, i01, i10, i11; // pixel indices
    double ax, ay;
};

BilinearTaps taps(const PixelProjection& p, int width, int height) {
    const int x0 = std::min(static_cast<int>(std::floor(p.u)), width - 1);
    const int y0 = std::min(static_cast<int>(std::floor(p.v)), height - 1);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    auto at = [&](int x, int y) { return static_cast<std::size_t>(y) * width + x; };
    return {at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1), p.u - x0, p.v - y0};
}

} // namespace

template <std::floating_point T>
std::vector<std::uint8_t> in_view(const ad::Tensor<T>& centers, const gs::Camera& camera) {
    const std::size_t g = ad::rows_of(centers);
    std::vector<std::uint8_t> out(g);
    const auto mu = centers.data();
    for (std::size_t i = 0; i < g; ++i) {
        const double m[3] = {mu[i * 3], mu[i * 3 + 1], mu[i * 3 + 2]};
        out[i] = project_center(camera, m).inside;
    }
    return out;
}

template <std::floating_point T>
ad::Tensor<T> lift_features(const ad::Tensor<T>& feature_map, const ad::Tensor<T>& centers,
                            const gs::Camera& camera) {
    if (feature_map.rank() != 3 || feature_map.dim(0) != static_cast<std::size_t>(camera.height) ||
        feature_map.dim(1) != static_cast<std::size_t>(camera.width)) {
        throw ContractViolation("feature map " + ad::shape_string(feature_map.shape()) +
                                " does not match the camera image size");
    }
    if (ad::cols_of(centers) != 3) {
        throw ContractViolation("lift_features expects G x 3 centers");
    }
    const std::size_t g = ad::rows_of(centers);
    const std::size_t channels = feature_map.dim(2);
    auto projections = std::make_shared<std::vector<PixelProjection>>(g);
    std::vector<T> out(g * channels, T(0));
    const auto mu = centers.data();
    const auto f = feature_map.data();
    for (std::size_t i = 0; i < g; ++i) {
        const double m[3] = {mu[i * 3], mu[i * 3 + 1], mu[i * 3 + 2]};
        const auto p = project_center(camera, m);
        (*projections)[i] = p;
        if (!p.inside) {
            continue;
        }
        const auto t = taps(p, camera.width, camera.height);
        const T w00 = static_cast<T>((1 - t.ax) * (1 - t.ay)), w01 = static_cast<T>(t.ax * (1 - t.ay));
        const T w10 = static_cast<T>((1 - t.ax) * t.ay), w11 = static_cast<T>(t.ax * t.ay);
        for (std::size_t c = 0; c < channels; ++c) {
            out[i * channels + c] = w00 * f[t.i00 * channels + c] + w01 * f[t.i01 * channels + c] +
                                    w10 * f[t.i10 * channels + c] + w11 * f[t.i11 * channels + c];
        }
    }
    const int width = camera.width, height = camera.height;
    return ad::make_result<T>(
        {g, channels}, std::move(out), {feature_map, centers},
        [projections, g, channels, width, height](ad::detail::Node<T>& node) {
            T* gmap = ad::parent_grad(node, 0);
            T* gmu = ad::parent_grad(node, 1);
            const auto& fmap = node.parents[0]->value;
            for (std::size_t i = 0; i < g; ++i) {
                const auto& p = (*projections)[i];
                if (!p.inside) {
                    continue;
                }
                const auto t = taps(p, width, height);
                const T* go = &node.grad[i * channels];
                if (gmap) {
                    const T w00 = static_cast<T>((1 - t.ax) * (1 - t.ay));
                    const T w01 = static_cast<T>(t.ax * (1 - t.ay));
                    const T w10 = static_cast<T>((1 - t.ax) * t.ay);
                    const T w11 = static_cast<T>(t.ax * t.ay);
                    for (std::size_t c = 0; c < channels; ++c) {
                        gmap[t.i00 * channels + c] += w00 * go[c];
                        gmap[t.i01 * channels + c] += w01 * go[c];
                        gmap[t.i10 * channels + c] += w10 * go[c];
                        gmap[t.i11 * channels + c] += w11 * go[c];
                    }
                }
                if (gmu) {
                    double dfdu = 0.0, dfdv = 0.0;
                    for (std::size_t c = 0; c < channels; ++c) {
                        const double f00 = fmap[t.i00 * channels + c], f01 = fmap[t.i01 * channels + c];
                        const double f10 = fmap[t.i10 * channels + c], f11 = fmap[t.i11 * channels + c];
                        dfdu += go[c] * ((1 - t.ay) * (f01 - f00) + t.ay * (f11 - f10));
                        dfdv += go[c] * ((1 - t.ax) * (f10 - f00) + t.ax * (f11 - f01));
                    }
                    for (int k = 0; k < 3; ++k) {
                        gmu[i * 3 + k] += static_cast<T>(dfdu * p.du[k] + dfdv * p.dv[k]);
                    }
                }
            }
        });
}

ContextSelection select_context_views(std::span<const ViewArea> areas, std::size_t count) {
    if (count == 0) {
        throw ContractViolation("at least one context view is required");
    }
    std::vector<ViewArea> ranked(areas.begin(), areas.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const ViewArea& a, const ViewArea& b) {
        if ((a.mask_pixels > 0) != (b.mask_pixels > 0)) {
            return a.mask_pixels > 0;
        }
        if (a.mask_pixels != b.mask_pixels) {
            return a.mask_pixels > b.mask_pixels;
        }
        return a.camera_id < b.camera_id;
    });
    ContextSelection out;
    out.invisible = std::none_of(ranked.begin(), ranked.end(),
                                 [](const ViewArea& a) { return a.mask_pixels > 0; });
    for (std::size_t i = 0; i < std::min(count, ranked.size()); ++i) {
        out.camera_ids.push_back(ranked[i].camera_id);
    }
    return out;
}

std::vector<std::vector<double>> fusion_coefficients(std::size_t views, double gamma) {
    if (views == 0) {
        throw ContractViolation("fusion needs at least one view");
    }
    const double n = static_cast<double>(views);
    const double z = 1.0 + gamma * (n - 1.0);
    std::vector<std::vector<double>> c(views, std::vector<double>(views));
    for (std::size_t j = 0; j < views; ++j) {
        for (std::size_t p = 0; p < views; ++p) {
            c[j][p] = (p == j ? 1.0 : gamma) / (n * z);
        }
    }
    return c;
}

namespace {

void check_views(std::size_t views, double gamma) {
    if (views == 0) {
        throw ContractViolation("fusion needs at least one view");
    }
    if (!(gamma >= 0.0)) {
        throw ContractViolation("fusion factor gamma must be non-negative");
    }
}

} // namespace

template <std::floating_point T>
ad::Tensor<T> cross_view_fuse(std::span<const ad::Tensor<T>> per_view, double gamma) {
    const std::size_t n = per_view.size();
    check_views(n, gamma);
    const auto shape = per_view[0].shape();
    const std::size_t size = per_view[0].numel();
    for (const auto& f : per_view) {
        if (f.shape() != shape) {
            throw ContractViolation("per-view features must share one shape");
        }
    }
    const T g = static_cast<T>(gamma);
    const T norm = static_cast<T>(static_cast<double>(n) * (1.0 + gamma * (static_cast<double>(n) - 1.0)));
    // inner_j = f_j + gamma * sum_{p != j} f_p, accumulated over j, then / (N Z).
    std::vector<T> out(size, T(0));
    for (std::size_t e = 0; e < size; ++e) {
        T total = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            T neighbours = T(0);
            for (std::size_t p = 0; p < n; ++p) {
                if (p != j) {
                    neighbours += per_view[p].data()[e];
                }
            }
            total += per_view[j].data()[e] + g * neighbours;
        }
        out[e] = total / norm;
    }
    // Each view's total weight is (1 + gamma (N - 1)) / (N Z).
    const T weight = (T(1) + g * static_cast<T>(n - 1)) / norm;
    std::vector<ad::Tensor<T>> inputs(per_view.begin(), per_view.end());
    return ad::make_result<T>(shape, std::move(out), inputs, [n, size, weight](ad::detail::Node<T>& node) {
        for (std::size_t j = 0; j < n; ++j) {
            if (T* gv = ad::parent_grad(node, j)) {
                for (std::size_t e = 0; e < size; ++e) {
                    gv[e] += weight * node.grad[e];
                }
            }
        }
    });
}

template <std::floating_point T>
ad::Tensor<T> cross_view_fuse_visible(std::span<const ad::Tensor<T>> per_view,
                                      const std::vector<std::vector<std::uint8_t>>& visible,
                                      double gamma) {
    const std::size_t n = per_view.size();
    check_views(n, gamma);
    const std::size_t g = ad::rows_of(per_view[0]);
    if (visible.size() != n) {
        throw ContractViolation("one visibility row per view required");
    }
    // Per-Gaussian coefficient of view p: sum_j c[j][p] over the visible set.
    std::vector<std::vector<T>> coeff(n, std::vector<T>(g, T(0)));
    for (std::size_t i = 0; i < g; ++i) {
        std::vector<std::size_t> members;
        for (std::size_t j = 0; j < n; ++j) {
            if (visible[j].at(i)) {
                members.push_back(j);
            }
        }
        if (members.empty()) {
            for (std::size_t j = 0; j < n; ++j) members.push_back(j);
        }
        const auto c = fusion_coefficients(members.size(), gamma);
        for (std::size_t a = 0; a < members.size(); ++a) {
            double total = 0.0;
            for (std::size_t b = 0; b < members.size(); ++b) {
                total += c[b][a];
            }
            coeff[members[a]][i] = static_cast<T>(total);
        }
    }
    ad::Tensor<T> out;
    for (std::size_t j = 0; j < n; ++j) {
        const auto term = ad::mul_col(per_view[j], ad::Tensor<T>({g}, coeff[j]));
        out = j == 0 ? term : ad::add(out, term);
    }
    return out;
}

std::size_t view_dependent_dim(const FusionConfig& config, int sh_degree) {
    return config.feature_channels + 3 * gs::sh_basis_count(sh_degree) + 1 + 4 + 3;
}

template <std::floating_point T>
ad::Tensor<T> view_dependent_features(const ad::Tensor<T>& lifted, const gs::GaussianSet<T>& set) {
    if (ad::rows_of(lifted) != set.size()) {
        throw ContractViolation("lifted features and Gaussian set sizes differ");
    }
    const std::vector<ad::Tensor<T>> parts{lifted, set.sh, ad::sigmoid(set.opacity_logit),
                                           ad::normalize_rows(set.rotation), ad::exp(set.log_scale)};
    return ad::concat_cols<T>(parts);
}

template <std::floating_point T>
FusionDecoder<T> make_fusion_decoder(ad::ParameterStore<T>& store, const std::string& name,
                                     const FusionConfig& config, int sh_degree, Rng& rng) {
    const std::size_t in = view_dependent_dim(config, sh_degree);
    FusionDecoder<T> d;
    d.trunk1 = ad::make_linear(store, name + ".trunk1", in, config.hidden1, rng);
    d.trunk2 = ad::make_linear(store, name + ".trunk2", config.hidden1, config.hidden2, rng);
    d.delta_head = ad::make_linear(store, name + ".delta", config.hidden2,
                                   3 * gs::sh_basis_count(sh_degree) + 8, rng, ad::Init::Zero);
    d.feature_head = ad::make_linear(store, name + ".feature", config.hidden2,
                                     config.instance_feature_dim, rng);
    d.update_all_sh_bands = config.update_all_sh_bands;
    return d;
}

template <std::floating_point T>
FusionResult<T> decode_fusion(const FusionDecoder<T>& decoder, const ad::Tensor<T>& fused,
                              const gs::GaussianSet<T>& initial) {
    const std::size_t sh_width = 3 * gs::sh_basis_count(initial.sh_degree);
    if (decoder.delta_head.out_features() != sh_width + 8) {
        throw ContractViolation("fusion decoder was built for a different SH degree");
    }
    const auto h = ad::relu(decoder.trunk2(ad::relu(decoder.trunk1(fused))));
    FusionResult<T> out;
    out.deltas = decoder.delta_head(h);
    auto dc = ad::slice_cols(out.deltas, 0, sh_width);
    if (!decoder.update_all_sh_bands) {
        std::vector<T> band0(initial.size() * sh_width, T(0));
        for (std::size_t i = 0; i < initial.size(); ++i) {
            std::fill_n(&band0[i * sh_width], 3, T(1));
        }
        dc = ad::mul(dc, ad::Tensor<T>({initial.size(), sh_width}, std::move(band0)));
    }
    out.refined = initial;
    out.refined.sh = ad::add(initial.sh, dc);
    out.refined.opacity_logit = ad::add(initial.opacity_logit, ad::slice_cols(out.deltas, sh_width, sh_width + 1));
    out.refined.rotation = ad::normalize_rows(
        ad::add(initial.rotation, ad::slice_cols(out.deltas, sh_width + 1, sh_width + 5)));
    out.refined.log_scale = ad::add(initial.log_scale, ad::slice_cols(out.deltas, sh_width + 5, sh_width + 8));
    out.instance_feature = ad::mean_rows(decoder.feature_head(h));
    return out;
}

#define MMGS_INSTANTIATE_FUSION(T)                                                                 \
    template struct ImageEncoder<T>;                                                               \
    template ImageEncoder<T> make_image_encoder(ad::ParameterStore<T>&, const std::string&,        \
                                                std::size_t, Rng&);                                \
    template ad::Tensor<T> encode_image(const ImageEncoder<T>&, const ad::Tensor<T>&);             \
    template std::vector<std::uint8_t> in_view(const ad::Tensor<T>&, const gs::Camera&);           \
    template ad::Tensor<T> lift_features(const ad::Tensor<T>&, const ad::Tensor<T>&,               \
                                         const gs::Camera&);                                       \
    template ad::Tensor<T> cross_view_fuse(std::span<const ad::Tensor<T>>, double);                \
    template ad::Tensor<T> cross_view_fuse_visible(std::span<const ad::Tensor<T>>,                 \
                                                   const std::vector<std::vector<std::uint8_t>>&,  \
                                                   double);                                        \
    template ad::Tensor<T> view_dependent_features(const ad::Tensor<T>&, const gs::GaussianSet<T>&); \
    template FusionDecoder<T> make_fusion_decoder(ad::ParameterStore<T>&, const std::string&,      \
                                                  const FusionConfig&, int, Rng&);                 \
    template FusionResult<T> decode_fusion(const FusionDecoder<T>&, const ad::Tensor<T>&,          \
                                           const gs::GaussianSet<T>&);

MMGS_INSTANTIATE_FUSION(float)
MMGS_INSTANTIATE_FUSION(double)

} // namespace mmgs::fusion
