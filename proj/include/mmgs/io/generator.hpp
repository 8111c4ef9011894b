#pragma once

#include "mmgs/gaussians/gaussian_set.hpp"

#include <cstdint>
#include <filesystem>

namespace mmgs::io {

struct GeneratorSpec {
    int humans = 2;
    int objects = 1;
    int cameras = 4;
    int frames = 3;
    int width = 64;
    int height = 64;
    std::uint64_t seed = 7;
    int sh_degree = 1;
    int human_vertices = 200;
    int object_vertices = 100;
};

/// Writes a complete scene directory: scene.json, templates, per-frame poses,
/// ground-truth PNGs rendered by the reference rasterizer, id+1 masks and the
/// teacher attributes under teacher/. Throws ContractViolation on invalid
/// settings. The output is a pure function of `spec`.
void generate_synthetic_scene(const GeneratorSpec& spec, const std::filesystem::path& out);

/// Canonical teacher attributes of one instance (centers are the template
/// vertices).
gs::GaussianSet<double> load_teacher(const std::filesystem::path& path);

} // namespace mmgs::io
