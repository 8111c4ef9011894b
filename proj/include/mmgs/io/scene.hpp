#pragma once

#include "mmgs/deform/deformation.hpp"
#include "mmgs/gaussians/camera.hpp"
#include "mmgs/io/image.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mmgs::io {

struct InstanceRecord {
    int id = 0;
    deform::InstanceKind kind = deform::InstanceKind::Object;
    std::string template_path; // relative to the scene root
    deform::SkinnedTemplate tmpl;
};

struct FrameRecord {
    int index = 0;
    std::map<int, std::string> images; // camera id -> path
    std::map<int, std::string> masks;  // camera id -> path
    std::map<int, std::string> poses;  // instance id -> path
};

/// Joint transforms for humans, a rigid pose for objects.
struct InstancePose {
    deform::JointTransforms joints;
    deform::RigidPose rigid;
};

struct Scene {
    std::filesystem::path root;
    std::vector<gs::Camera> cameras;
    std::vector<InstanceRecord> instances;
    std::vector<FrameRecord> frames;

    /// Throws ContractViolation for an unknown id.
    const gs::Camera& camera(int id) const;
    std::size_t instance_index(int id) const;
    std::vector<int> camera_ids() const;
};

/// Parses and validates `dir/scene.json`, every template, every pose file and
/// every image and mask (dimensions and label values).
Scene load_scene(const std::filesystem::path& dir);

/// Schema-level parse of a scene.json document (no file access).
/// SchemaError carries the JSON pointer of the first violation.
Scene parse_scene_json(const nlohmann::json& doc);
nlohmann::json scene_to_json(const Scene& scene);

deform::SkinnedTemplate parse_template(const nlohmann::json& doc);
nlohmann::json template_to_json(const deform::SkinnedTemplate& tmpl);
deform::SkinnedTemplate load_template(const std::filesystem::path& path);

/// Humans: array of K row-major 4x4 matrices. Objects: one 4x4 matrix.
InstancePose parse_pose(const nlohmann::json& doc, const deform::SkinnedTemplate& tmpl);
nlohmann::json pose_to_json(const InstancePose& pose, deform::InstanceKind kind);
InstancePose load_pose(const std::filesystem::path& path, const deform::SkinnedTemplate& tmpl);

/// Ground truth of one frame loaded from disk.
struct FrameData {
    int index = 0;
    std::map<int, Image> images;
    std::map<int, Mask> masks;
    std::map<int, InstancePose> poses; // instance id -> pose
};

FrameData load_frame(const Scene& scene, std::size_t frame);

/// Reads a JSON file; parse errors become FormatError naming the file.
nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

} // namespace mmgs::io
