#pragma once

// Shared fixtures for the unit and acceptance tests.

#include "mmgs/common/rng.hpp"
#include "mmgs/gaussians/camera.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace mmgs::testing {

/// Camera at the origin looking down +z with the principal point at the
/// image center.
inline gs::Camera axis_camera(int width, int height, double focal) {
    gs::Camera cam;
    cam.K << focal, 0, 0.5 * (width - 1), 0, focal, 0.5 * (height - 1), 0, 0, 1;
    cam.width = width;
    cam.height = height;
    return cam;
}

struct RandomSceneOptions {
    std::size_t count = 50;
    int sh_degree = 1;
    double min_log_scale = std::log(0.02);
    double max_log_scale = std::log(0.15);
    double spread = 0.6;         // half-extent of the center box in x and y
    double min_depth = 2.0;
    double max_depth = 4.0;
    double sh_amplitude = 0.4;
    bool with_deformation = false;
};

/// Random Gaussians in front of axis_camera.
template <std::floating_point T>
gs::GaussianSet<T> random_gaussians(Rng& rng, const RandomSceneOptions& o = {}) {
    const std::size_t g = o.count;
    const std::size_t nb = gs::sh_basis_count(o.sh_degree);
    std::vector<T> centers, sh, opacity, rotation, log_scale, deformation;
    for (std::size_t i = 0; i < g; ++i) {
        centers.push_back(static_cast<T>(rng.uniform(-o.spread, o.spread)));
        centers.push_back(static_cast<T>(rng.uniform(-o.spread, o.spread)));
        centers.push_back(static_cast<T>(rng.uniform(o.min_depth, o.max_depth)));
        for (std::size_t b = 0; b < nb * 3; ++b) {
            sh.push_back(static_cast<T>(rng.uniform(-o.sh_amplitude, o.sh_amplitude)));
        }
        opacity.push_back(static_cast<T>(rng.uniform(-2.0, 3.0)));
        double q[4];
        double n = 0;
        for (double& x : q) {
            x = rng.normal();
            n += x * x;
        }
        for (double x : q) {
            rotation.push_back(static_cast<T>(x / std::sqrt(n)));
        }
        for (int k = 0; k < 3; ++k) {
            log_scale.push_back(static_cast<T>(rng.uniform(o.min_log_scale, o.max_log_scale)));
        }
        if (o.with_deformation) {
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    deformation.push_back(static_cast<T>((r == c ? 1.0 : 0.0) + rng.uniform(-0.3, 0.3)));
                }
            }
        }
    }
    return gs::make_gaussian_set<T>(o.sh_degree, centers, sh, opacity, rotation, log_scale,
                                    deformation);
}

} // namespace mmgs::testing

#include "mmgs/ad/ops.hpp"
#include "mmgs/deform/deformation.hpp"

namespace mmgs::testing {

/// Smallest |pre-activation| over both ReLU layers of `net` for one point.
/// Finite differences with step h are only meaningful when this margin is
/// well above h.
template <std::floating_point T>
double relu_margin(const deform::LbsNetwork<T>& net, std::span<const double> point) {
    ad::NoGradGuard guard;
    const auto z1 = net.hidden1(deform::positional_encoding<T>(point));
    const auto z2 = net.hidden2(ad::relu(z1));
    double margin = 1e300;
    for (auto v : z1.data()) margin = std::min(margin, std::abs(static_cast<double>(v)));
    for (auto v : z2.data()) margin = std::min(margin, std::abs(static_cast<double>(v)));
    return margin;
}

/// Resamples template vertices until every one sits at least `margin` away
/// from the network's ReLU kinks. Weight rows are kept.
template <std::floating_point T>
void move_off_relu_kinks(deform::SkinnedTemplate& tmpl, const deform::LbsNetwork<T>& net,
                         Rng& rng, double lo, double hi, double margin) {
    for (std::size_t v = 0; v < tmpl.vertex_count; ++v) {
        std::span<double> p(&tmpl.vertices[v * 3], 3);
        while (relu_margin(net, std::span<const double>(p)) < margin) {
            for (auto& x : p) {
                x = rng.uniform(lo, hi);
            }
        }
    }
}

} // namespace mmgs::testing

#include "mmgs/io/generator.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <unistd.h>

namespace mmgs::testing {

/// Generates `spec` once per process under a temporary directory named by
/// `tag`; the directory is removed at exit.
inline const std::filesystem::path& generated_scene(const std::string& tag, const io::GeneratorSpec& spec) {
    struct Cache {
        std::map<std::string, std::filesystem::path> dirs;
        ~Cache() {
            for (const auto& [_, dir] : dirs) {
                std::error_code ec;
                std::filesystem::remove_all(dir.parent_path(), ec);
            }
        }
    };
    static Cache cache;
    auto it = cache.dirs.find(tag);
    if (it == cache.dirs.end()) {
        const auto root = std::filesystem::temp_directory_path() /
                          ("mmgs_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(root);
        io::generate_synthetic_scene(spec, root / "scene");
        it = cache.dirs.emplace(tag, root / "scene").first;
    }
    return it->second;
}

/// Small scene for fast model tests: one human, one object, three cameras.
inline io::GeneratorSpec small_scene_spec() {
    io::GeneratorSpec s;
    s.humans = 1;
    s.objects = 1;
    s.cameras = 3;
    s.frames = 2;
    s.width = 32;
    s.height = 32;
    s.human_vertices = 60;
    s.object_vertices = 30;
    s.seed = 11;
    return s;
}

} // namespace mmgs::testing
