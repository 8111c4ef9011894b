#include "mmgs/io/generator.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/common/rng.hpp"
#include "mmgs/deform/deformation.hpp"
#include "mmgs/interaction/interaction.hpp"
#include "mmgs/io/image.hpp"
#include "mmgs/io/scene.hpp"
#include "mmgs/raster/rasterizer.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mmgs::io {

namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;
constexpr double kPi = std::numbers::pi;

struct Affine {
    Matrix3d r = Matrix3d::Identity();
    Vector3d t = Vector3d::Zero();

    Affine operator*(const Affine& o) const { return {r * o.r, r * o.t + t}; }
    static Affine about(const Vector3d& pivot, const Matrix3d& rot) { return {rot, pivot - rot * pivot}; }
    static Affine translate(const Vector3d& t) { return {Matrix3d::Identity(), t}; }
};

Matrix3d axis_rotation(const Vector3d& axis, double angle) {
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// Capsule-human rig in the spread-arm rest pose, z up, feet at z = 0.
struct Segment {
    Vector3d a, b;
    double radius;
    Vector3d pivot;
    Vector3d swing_axis;
    double swing;
};

const Segment kHumanRig[4] = {
    {{0, 0, 0.75}, {0, 0, 1.35}, 0.15, {0, 0, 0.75}, {1, 0, 0}, 0.12}, // torso (root)
    {{0, 0, 0.75}, {0, 0, 0.05}, 0.11, {0, 0, 0.75}, {1, 0, 0}, 0.30}, // legs
    {{0, 0, 1.40}, {0, 0, 1.65}, 0.11, {0, 0, 1.35}, {0, 1, 0}, 0.25}, // head
    {{-0.55, 0, 1.30}, {0.55, 0, 1.30}, 0.06, {0, 0, 1.30}, {0, 0, 1}, 0.45}, // arms
};
constexpr int kHumanJoints = 4;

double segment_distance(const Vector3d& p, const Segment& s) {
    const Vector3d ab = s.b - s.a;
    const double u = std::clamp((p - s.a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (s.a + u * ab)).norm();
}

Vector3d random_unit(Rng& rng) {
    Vector3d v(rng.normal(), rng.normal(), rng.normal());
    return v.normalized();
}

deform::SkinnedTemplate make_human(Rng& rng, int vertex_count) {
    deform::SkinnedTemplate t;
    t.kind = deform::InstanceKind::Human;
    t.joint_count = kHumanJoints;
    t.vertex_count = static_cast<std::size_t>(vertex_count);
    double area[kHumanJoints], total = 0;
    for (int k = 0; k < kHumanJoints; ++k) {
        const auto& s = kHumanRig[k];
        area[k] = 2 * kPi * s.radius * (s.b - s.a).norm() + 4 * kPi * s.radius * s.radius;
        total += area[k];
    }
    for (int v = 0; v < vertex_count; ++v) {
        double pick = rng.uniform(0, total);
        int k = 0;
        while (k + 1 < kHumanJoints && pick > area[k]) {
            pick -= area[k++];
        }
        const auto& s = kHumanRig[k];
        const Vector3d p = s.a + rng.uniform() * (s.b - s.a) + s.radius * random_unit(rng);
        t.vertices.insert(t.vertices.end(), {p.x(), p.y(), p.z()});
        // Inverse squared distance to each joint's segment, normalized.
        double w[kHumanJoints], sum = 0;
        for (int j = 0; j < kHumanJoints; ++j) {
            const double d = segment_distance(p, kHumanRig[j]);
            w[j] = 1.0 / (d * d + 1e-3);
            sum += w[j];
        }
        for (int j = 0; j < kHumanJoints; ++j) {
            t.weights.push_back(w[j] / sum);
        }
    }
    t.offsets.assign(t.vertex_count * 3, 0.0);
    return t;
}

deform::SkinnedTemplate make_box(Rng& rng, int vertex_count, const Vector3d& half) {
    deform::SkinnedTemplate t;
    t.kind = deform::InstanceKind::Object;
    t.vertex_count = static_cast<std::size_t>(vertex_count);
    const double faces[3] = {half.y() * half.z(), half.x() * half.z(), half.x() * half.y()};
    const double total = faces[0] + faces[1] + faces[2];
    for (int v = 0; v < vertex_count; ++v) {
        double pick = rng.uniform(0, total);
        int axis = 0;
        while (axis < 2 && pick > faces[axis]) {
            pick -= faces[axis++];
        }
        Vector3d p;
        for (int a = 0; a < 3; ++a) {
            p[a] = rng.uniform(-half[a], half[a]);
        }
        p[axis] = rng.uniform() < 0.5 ? -half[axis] : half[axis];
        t.vertices.insert(t.vertices.end(), {p.x(), p.y(), p.z()});
    }
    t.offsets.assign(t.vertex_count * 3, 0.0);
    return t;
}

struct HumanMotion {
    Vector3d base;
    double yaw;
    double phase[kHumanJoints];
    double sway_phase;
};

Affine human_root(const HumanMotion& m, double time) {
    const Vector3d root = m.base + Vector3d(0.06 * std::sin(time + m.sway_phase), 0.04 * std::cos(time), 0);
    return Affine::translate(root) * Affine{axis_rotation({0, 0, 1}, m.yaw + 0.15 * std::sin(0.7 * time)), {}};
}

deform::JointTransforms human_pose(const HumanMotion& m, double time) {
    const Affine root = human_root(m, time);
    deform::JointTransforms joints;
    Affine torso;
    for (int k = 0; k < kHumanJoints; ++k) {
        const auto& s = kHumanRig[k];
        const double angle = s.swing * std::sin(time + m.phase[k]);
        const Affine local = Affine::about(s.pivot, axis_rotation(s.swing_axis, angle));
        const Affine world = k == 0 ? root * local : torso * local;
        if (k == 0) {
            torso = world;
        }
        joints.rotations.push_back(world.r);
        joints.translations.push_back(world.t);
    }
    return joints;
}

struct ObjectMotion {
    int anchor = 0;           // human index
    Vector3d offset;          // in the anchor's root frame
    double spin_phase = 0.0;
};

deform::RigidPose object_pose(const ObjectMotion& o, const std::vector<HumanMotion>& humans, double time) {
    deform::RigidPose pose;
    if (humans.empty()) {
        pose.rotation = axis_rotation({0, 0, 1}, 0.3 * std::sin(time + o.spin_phase));
        pose.translation = o.offset;
        return pose;
    }
    const Affine root = human_root(humans[o.anchor], time);
    pose.rotation = root.r * axis_rotation({0, 0, 1}, 0.2 * std::sin(time + o.spin_phase));
    pose.translation = root.r * o.offset + root.t;
    return pose;
}

gs::GaussianSet<double> make_teacher(Rng& rng, const deform::SkinnedTemplate& tmpl, int sh_degree) {
    const auto init = deform::initialize_gaussian_attributes<double>(tmpl.vertices, sh_degree);
    const std::size_t g = tmpl.vertex_count;
    const std::size_t nb = gs::sh_basis_count(sh_degree);
    double base[3];
    for (double& b : base) b = rng.uniform(-0.9, 1.0);
    std::vector<double> sh(g * nb * 3), opacity(g), rotation(g * 4), log_scale(g * 3);
    for (std::size_t i = 0; i < g; ++i) {
        for (int c = 0; c < 3; ++c) {
            sh[i * nb * 3 + c] = base[c] + 0.25 * rng.normal();
        }
        for (std::size_t b = 3; b < nb * 3; ++b) {
            sh[i * nb * 3 + b] = rng.uniform(-0.1, 0.1);
        }
        opacity[i] = rng.uniform(1.0, 3.0);
        double q[4], n = 0;
        for (double& x : q) {
            x = rng.normal();
            n += x * x;
        }
        for (int k = 0; k < 4; ++k) {
            rotation[i * 4 + k] = q[k] / std::sqrt(n);
        }
        for (int k = 0; k < 3; ++k) {
            log_scale[i * 3 + k] = init.log_scale.at(i * 3 + k) + rng.uniform(0.1, 0.8);
        }
    }
    return gs::make_gaussian_set<double>(sh_degree, init.centers.to_vector(), std::move(sh), std::move(opacity),
                                         std::move(rotation), std::move(log_scale));
}

nlohmann::json teacher_json(const gs::GaussianSet<double>& t) {
    return {{"sh_degree", t.sh_degree},
            {"sh", t.sh.to_vector()},
            {"opacity_logit", t.opacity_logit.to_vector()},
            {"rotation", t.rotation.to_vector()},
            {"log_scale", t.log_scale.to_vector()}};
}

std::string frame_dir(int f) { return "frames/" + std::to_string(f); }

} // namespace

gs::GaussianSet<double> load_teacher(const std::filesystem::path& path) {
    const auto doc = read_json(path);
    try {
        const int degree = doc.at("sh_degree").get<int>();
        const auto sh = doc.at("sh").get<std::vector<double>>();
        const std::size_t g = sh.size() / (3 * gs::sh_basis_count(degree));
        std::vector<double> centers(g * 3, 0.0);
        auto set = gs::make_gaussian_set<double>(degree, std::move(centers), sh,
                                                 doc.at("opacity_logit").get<std::vector<double>>(),
                                                 doc.at("rotation").get<std::vector<double>>(),
                                                 doc.at("log_scale").get<std::vector<double>>());
        set.validate();
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const ContractViolation& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void generate_synthetic_scene(const GeneratorSpec& spec, const std::filesystem::path& out) {
    if (spec.humans < 0 || spec.objects < 0 || spec.humans + spec.objects < 1) {
        throw ContractViolation("the scene needs at least one instance");
    }
    if (spec.humans + spec.objects > 254) {
        throw ContractViolation("at most 254 instances fit in 8-bit masks");
    }
    if (spec.cameras < 1 || spec.frames < 1) {
        throw ContractViolation("camera and frame counts must be at least 1");
    }
    if (spec.width < 32 || spec.height < 32) {
        throw ContractViolation("resolution must be at least 32 x 32");
    }
    if (spec.sh_degree < 0 || spec.sh_degree > 3) {
        throw ContractViolation("SH degree must lie in [0, 3]");
    }
    Rng rng(spec.seed);
    namespace fs = std::filesystem;
    fs::create_directories(out / "templates");
    fs::create_directories(out / "teacher");

    Scene scene;
    scene.root = out;
    std::vector<gs::GaussianSet<double>> teachers;
    std::vector<HumanMotion> humans;
    std::vector<ObjectMotion> objects;
    const double spacing = 1.6;
    for (int h = 0; h < spec.humans; ++h) {
        InstanceRecord rec;
        rec.id = h;
        rec.kind = deform::InstanceKind::Human;
        rec.tmpl = make_human(rng, spec.human_vertices);
        HumanMotion m;
        m.base = Vector3d((h - 0.5 * (spec.humans - 1)) * spacing, 0.0, 0.0);
        m.yaw = rng.uniform(-0.4, 0.4);
        for (double& p : m.phase) p = rng.uniform(0, 2 * kPi);
        m.sway_phase = rng.uniform(0, 2 * kPi);
        humans.push_back(m);
        scene.instances.push_back(std::move(rec));
    }
    for (int o = 0; o < spec.objects; ++o) {
        InstanceRecord rec;
        rec.id = spec.humans + o;
        rec.kind = deform::InstanceKind::Object;
        const Vector3d half(rng.uniform(0.15, 0.28), rng.uniform(0.15, 0.28), rng.uniform(0.15, 0.28));
        rec.tmpl = make_box(rng, spec.object_vertices, half);
        ObjectMotion m;
        m.spin_phase = rng.uniform(0, 2 * kPi);
        if (spec.humans > 0) {
            // Beside the anchor's waist, close enough that the boxes touch.
            m.anchor = o % spec.humans;
            const int side = (o / spec.humans) % 2 == 0 ? 1 : -1;
            m.offset = Vector3d(side * (0.3 + half.x()), 0.0, 0.9);
        } else {
            m.offset = Vector3d((o - 0.5 * (spec.objects - 1)) * 0.7, 0.0, half.z());
        }
        objects.push_back(m);
        scene.instances.push_back(std::move(rec));
    }
    for (auto& inst : scene.instances) {
        inst.template_path = "templates/instance_" + std::to_string(inst.id) + ".json";
        inst.tmpl.validate();
        teachers.push_back(make_teacher(rng, inst.tmpl, spec.sh_degree));
        write_json(out / inst.template_path, template_to_json(inst.tmpl));
        write_json(out / "teacher" / ("instance_" + std::to_string(inst.id) + ".json"), teacher_json(teachers.back()));
    }

    // Poses and stage-0 teacher states for every frame.
    std::vector<std::vector<InstancePose>> poses(spec.frames);
    std::vector<gs::GaussianSet<double>> frame_sets;
    std::vector<std::uint32_t> instance_of;
    bool any_edge = false;
    double radius = 0.0;
    const Vector3d target(0.0, 0.0, 0.85);
    for (int f = 0; f < spec.frames; ++f) {
        const double time = 1.3 * f;
        std::vector<gs::GaussianSet<double>> posed;
        std::vector<interaction::Aabb> boxes;
        instance_of.clear();
        for (std::size_t i = 0; i < scene.instances.size(); ++i) {
            const auto& inst = scene.instances[i];
            InstancePose pose;
            if (inst.kind == deform::InstanceKind::Human) {
                pose.joints = human_pose(humans[i], time);
                const ad::Tensor<double> base({inst.tmpl.vertex_count, inst.tmpl.joint_count}, inst.tmpl.weights);
                const auto w = deform::modulate_weights(base, ad::Tensor<double>::zeros(base.shape()));
                posed.push_back(deform::pose_human(inst.tmpl, teachers[i], pose.joints, w));
            } else {
                pose.rigid = object_pose(objects[i - spec.humans], humans, time);
                posed.push_back(deform::pose_object(inst.tmpl, teachers[i], pose.rigid));
            }
            boxes.push_back(interaction::instance_aabb(posed.back().centers));
            instance_of.insert(instance_of.end(), inst.tmpl.vertex_count, static_cast<std::uint32_t>(i));
            for (std::size_t v = 0; v < inst.tmpl.vertex_count; ++v) {
                const auto c = posed.back().centers.data();
                radius = std::max(radius, (Vector3d(c[v * 3], c[v * 3 + 1], c[v * 3 + 2]) - target).norm());
            }
            poses[f].push_back(pose);
        }
        any_edge = any_edge || !interaction::build_scene_graph(boxes).edges.empty();
        frame_sets.push_back(gs::concat<double>(posed));
    }
    if (spec.humans > 0 && spec.objects > 0 && !any_edge) {
        throw std::logic_error("generator placed no interacting instances");
    }

    // Ring of cameras looking at the scene center.
    const double distance = 3.0 * std::max(radius, 0.5);
    const double focal = 0.5 * std::min(spec.width, spec.height) * distance / (1.15 * radius);
    const double phase = rng.uniform(0, 2 * kPi / spec.cameras);
    for (int c = 0; c < spec.cameras; ++c) {
        const double angle = phase + 2 * kPi * c / spec.cameras;
        const Vector3d eye = target + Vector3d(distance * std::cos(angle), distance * std::sin(angle), 0.35 * distance);
        scene.cameras.push_back(gs::Camera::look_at(eye, target, {0, 0, 1}, focal, spec.width, spec.height, c));
    }

    raster::RasterSettings settings;
    for (int f = 0; f < spec.frames; ++f) {
        FrameRecord rec;
        rec.index = f;
        fs::create_directories(out / frame_dir(f));
        for (std::size_t i = 0; i < scene.instances.size(); ++i) {
            const auto& inst = scene.instances[i];
            const std::string path = frame_dir(f) + "/pose_" + std::to_string(inst.id) + ".json";
            write_json(out / path, pose_to_json(poses[f][i], inst.kind));
            rec.poses[inst.id] = path;
        }
        for (const auto& cam : scene.cameras) {
            const auto rendered = raster::rasterize_reference(frame_sets[f], cam, {0, 0, 0}, settings);
            Image image{cam.width, cam.height, std::vector<float>(rendered.pixels.begin(), rendered.pixels.end())};
            const auto weights =
                raster::instance_weights(frame_sets[f], cam, instance_of, scene.instances.size(), settings);
            Mask mask{cam.width, cam.height, std::vector<std::uint8_t>(static_cast<std::size_t>(cam.width) * cam.height, 0)};
            for (std::size_t p = 0; p < mask.labels.size(); ++p) {
                for (std::size_t i = 0; i < scene.instances.size(); ++i) {
                    if (weights[i][p] > 0.5) {
                        mask.labels[p] = static_cast<std::uint8_t>(scene.instances[i].id + 1);
                    }
                }
            }
            const std::string stem = frame_dir(f) + "/";
            rec.images[cam.id] = stem + "image_" + std::to_string(cam.id) + ".png";
            rec.masks[cam.id] = stem + "mask_" + std::to_string(cam.id) + ".png";
            write_png(out / rec.images[cam.id], image);
            write_mask_png(out / rec.masks[cam.id], mask);
        }
        scene.frames.push_back(std::move(rec));
    }
    write_json(out / "scene.json", scene_to_json(scene));
}

} // namespace mmgs::io
