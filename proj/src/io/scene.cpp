#include "mmgs/io/scene.hpp"

#include "mmgs/common/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mmgs::io {

using nlohmann::json;

namespace {

std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

/// A value inside a document together with its JSON pointer.
class Cursor {
public:
    Cursor(const json& value, std::string pointer) : value_(value), pointer_(std::move(pointer)) {}

    const std::string& pointer() const { return pointer_; }
    const json& value() const { return value_; }
    [[noreturn]] void fail(const std::string& message) const {
        throw SchemaError(pointer_.empty() ? "/" : pointer_, message);
    }

    bool has(const std::string& key) const { return value_.is_object() && value_.contains(key); }

    Cursor at(const std::string& key) const {
        if (!value_.is_object()) {
            fail("expected an object");
        }
        const std::string child = pointer_ + "/" + escape(key);
        const auto it = value_.find(key);
        if (it == value_.end()) {
            throw SchemaError(child, "missing required field");
        }
        return {*it, child};
    }

    Cursor at(std::size_t index) const { return {value_.at(index), pointer_ + "/" + std::to_string(index)}; }

    std::size_t array_size() const {
        if (!value_.is_array()) {
            fail("expected an array");
        }
        return value_.size();
    }

    const json& object() const {
        if (!value_.is_object()) {
            fail("expected an object");
        }
        return value_;
    }

    long long as_int() const {
        if (!value_.is_number_integer()) {
            fail("expected an integer");
        }
        return value_.get<long long>();
    }

    double as_number() const {
        if (!value_.is_number()) {
            fail("expected a number");
        }
        return value_.get<double>();
    }

    std::string as_string() const {
        if (!value_.is_string()) {
            fail("expected a string");
        }
        return value_.get<std::string>();
    }

    std::vector<double> numbers(std::size_t count) const {
        if (array_size() != count) {
            fail("expected " + std::to_string(count) + " numbers, got " + std::to_string(value_.size()));
        }
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = at(i).as_number();
        }
        return out;
    }

    /// rows x cols as nested arrays, appended row-major to `out`.
    void matrix(std::size_t rows, std::size_t cols, std::vector<double>& out) const {
        if (array_size() != rows) {
            fail("expected " + std::to_string(rows) + " rows, got " + std::to_string(value_.size()));
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const auto row = at(r).numbers(cols);
            out.insert(out.end(), row.begin(), row.end());
        }
    }

private:
    const json& value_;
    std::string pointer_;
};

int parse_id(const Cursor& c, const std::string& what) {
    const auto v = c.as_int();
    if (v < 0 || v > 1'000'000) {
        c.fail(what + " must be a non-negative integer");
    }
    return static_cast<int>(v);
}

std::map<int, std::string> parse_path_map(const Cursor& c) {
    std::map<int, std::string> out;
    for (const auto& [key, value] : c.object().items()) {
        const Cursor entry(value, c.pointer() + "/" + escape(key));
        std::size_t used = 0;
        int id = -1;
        try {
            id = std::stoi(key, &used);
        } catch (const std::exception&) {
        }
        if (id < 0 || used != key.size()) {
            entry.fail("key must be a non-negative integer id");
        }
        out[id] = entry.as_string();
    }
    return out;
}

Eigen::Matrix4d parse_matrix4(const Cursor& c) {
    std::vector<double> v;
    if (c.array_size() == 16) {
        v = c.numbers(16);
    } else {
        c.matrix(4, 4, v);
    }
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r) {
        for (int k = 0; k < 4; ++k) {
            m(r, k) = v[r * 4 + k];
        }
    }
    if (std::abs(m(3, 0)) + std::abs(m(3, 1)) + std::abs(m(3, 2)) + std::abs(m(3, 3) - 1.0) > 1e-9) {
        c.fail("last row of a rigid transform must be (0, 0, 0, 1)");
    }
    return m;
}

json matrix4_json(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
    json m = json::array();
    for (int i = 0; i < 3; ++i) {
        m.push_back({r(i, 0), r(i, 1), r(i, 2), t[i]});
    }
    m.push_back({0.0, 0.0, 0.0, 1.0});
    return m;
}

json rows_json(const std::vector<double>& flat, std::size_t cols) {
    json out = json::array();
    for (std::size_t i = 0; i < flat.size(); i += cols) {
        out.push_back(std::vector<double>(flat.begin() + i, flat.begin() + i + cols));
    }
    return out;
}

template <class Fn>
auto rethrow_with_context(const std::string& context, Fn&& fn) {
    try {
        return fn();
    } catch (const SchemaError& e) {
        const std::string message = std::string(e.what()).substr(e.pointer().size() + 2);
        throw SchemaError(e.pointer(), message + " (in " + context + ")");
    } catch (const ContractViolation& e) {
        throw FormatError(context + ": " + e.what());
    }
}

} // namespace

const gs::Camera& Scene::camera(int id) const {
    for (const auto& c : cameras) {
        if (c.id == id) {
            return c;
        }
    }
    throw ContractViolation("camera id " + std::to_string(id) + " is not in the scene");
}

std::size_t Scene::instance_index(int id) const {
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].id == id) {
            return i;
        }
    }
    throw ContractViolation("instance id " + std::to_string(id) + " is not in the scene");
}

std::vector<int> Scene::camera_ids() const {
    std::vector<int> ids;
    for (const auto& c : cameras) ids.push_back(c.id);
    return ids;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << doc.dump(1) << '\n';
}

Scene parse_scene_json(const json& doc) {
    const Cursor root(doc, "");
    root.object();
    if (root.at("version").as_int() != 1) {
        root.at("version").fail("unsupported scene version");
    }
    Scene scene;
    std::set<int> camera_ids;
    const auto cams = root.at("cameras");
    for (std::size_t i = 0; i < cams.array_size(); ++i) {
        const auto c = cams.at(i);
        gs::Camera cam;
        cam.id = parse_id(c.at("id"), "camera id");
        if (!camera_ids.insert(cam.id).second) {
            c.at("id").fail("duplicate camera id " + std::to_string(cam.id));
        }
        const auto k = c.at("K").numbers(9);
        const auto r = c.at("R").numbers(9);
        const auto t = c.at("t").numbers(3);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                cam.K(a, b) = k[a * 3 + b];
                cam.R(a, b) = r[a * 3 + b];
            }
            cam.t[a] = t[a];
        }
        cam.width = static_cast<int>(c.at("width").as_int());
        cam.height = static_cast<int>(c.at("height").as_int());
        try {
            cam.validate();
        } catch (const ContractViolation& e) {
            c.fail(e.what());
        }
        scene.cameras.push_back(cam);
    }
    if (scene.cameras.empty()) {
        cams.fail("at least one camera is required");
    }
    std::set<int> instance_ids;
    const auto insts = root.at("instances");
    for (std::size_t i = 0; i < insts.array_size(); ++i) {
        const auto c = insts.at(i);
        InstanceRecord rec;
        rec.id = parse_id(c.at("id"), "instance id");
        if (rec.id > 254) {
            c.at("id").fail("instance ids above 254 cannot be encoded in 8-bit masks");
        }
        if (!instance_ids.insert(rec.id).second) {
            c.at("id").fail("duplicate instance id " + std::to_string(rec.id));
        }
        const auto kind = c.at("kind").as_string();
        if (kind == "human") {
            rec.kind = deform::InstanceKind::Human;
        } else if (kind == "object") {
            rec.kind = deform::InstanceKind::Object;
        } else {
            c.at("kind").fail("kind must be \"human\" or \"object\", got \"" + kind + "\"");
        }
        rec.template_path = c.at("template").as_string();
        scene.instances.push_back(std::move(rec));
    }
    if (scene.instances.empty()) {
        insts.fail("at least one instance is required");
    }
    const auto frames = root.at("frames");
    for (std::size_t f = 0; f < frames.array_size(); ++f) {
        const auto c = frames.at(f);
        FrameRecord rec;
        rec.index = parse_id(c.at("index"), "frame index");
        rec.images = parse_path_map(c.at("images"));
        rec.masks = parse_path_map(c.at("masks"));
        rec.poses = parse_path_map(c.at("poses"));
        for (const int id : camera_ids) {
            if (!rec.images.count(id)) {
                c.at("images").fail("no image for camera " + std::to_string(id));
            }
            if (!rec.masks.count(id)) {
                c.at("masks").fail("no mask for camera " + std::to_string(id));
            }
        }
        for (const auto& [id, path] : rec.images) {
            if (!camera_ids.count(id)) {
                c.at("images").at(std::to_string(id)).fail("unknown camera id");
            }
        }
        for (const auto& [id, path] : rec.masks) {
            if (!camera_ids.count(id)) {
                c.at("masks").at(std::to_string(id)).fail("unknown camera id");
            }
        }
        for (const int id : instance_ids) {
            if (!rec.poses.count(id)) {
                c.at("poses").fail("no pose for instance " + std::to_string(id));
            }
        }
        for (const auto& [id, path] : rec.poses) {
            if (!instance_ids.count(id)) {
                c.at("poses").at(std::to_string(id)).fail("unknown instance id");
            }
        }
        scene.frames.push_back(std::move(rec));
    }
    if (scene.frames.empty()) {
        frames.fail("at least one frame is required");
    }
    return scene;
}

json scene_to_json(const Scene& scene) {
    json doc;
    doc["version"] = 1;
    doc["cameras"] = json::array();
    for (const auto& c : scene.cameras) {
        std::vector<double> k, r;
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                k.push_back(c.K(a, b));
                r.push_back(c.R(a, b));
            }
        }
        doc["cameras"].push_back({{"id", c.id},
                                  {"K", k},
                                  {"R", r},
                                  {"t", {c.t[0], c.t[1], c.t[2]}},
                                  {"width", c.width},
                                  {"height", c.height}});
    }
    doc["instances"] = json::array();
    for (const auto& inst : scene.instances) {
        doc["instances"].push_back(
            {{"id", inst.id}, {"kind", deform::kind_name(inst.kind)}, {"template", inst.template_path}});
    }
    doc["frames"] = json::array();
    auto paths = [](const std::map<int, std::string>& m) {
        json out = json::object();
        for (const auto& [id, p] : m) out[std::to_string(id)] = p;
        return out;
    };
    for (const auto& f : scene.frames) {
        doc["frames"].push_back(
            {{"index", f.index}, {"images", paths(f.images)}, {"masks", paths(f.masks)}, {"poses", paths(f.poses)}});
    }
    return doc;
}

deform::SkinnedTemplate parse_template(const json& doc) {
    const Cursor root(doc, "");
    deform::SkinnedTemplate t;
    const auto kind = root.at("kind").as_string();
    if (kind == "human") {
        t.kind = deform::InstanceKind::Human;
    } else if (kind == "object") {
        t.kind = deform::InstanceKind::Object;
    } else {
        root.at("kind").fail("kind must be \"human\" or \"object\"");
    }
    const auto verts = root.at("vertices");
    t.vertex_count = verts.array_size();
    verts.matrix(t.vertex_count, 3, t.vertices);
    if (root.has("weights")) {
        const auto w = root.at("weights");
        if (w.array_size() != t.vertex_count) {
            w.fail("expected one weight row per vertex");
        }
        t.joint_count = t.vertex_count ? w.at(0).array_size() : 0;
        w.matrix(t.vertex_count, t.joint_count, t.weights);
    } else if (t.kind == deform::InstanceKind::Human) {
        root.fail("human templates need skinning weights");
    }
    if (root.has("offsets")) {
        root.at("offsets").matrix(t.vertex_count, 3, t.offsets);
    } else {
        t.offsets.assign(t.vertex_count * 3, 0.0);
    }
    t.validate();
    return t;
}

json template_to_json(const deform::SkinnedTemplate& tmpl) {
    json doc;
    doc["kind"] = deform::kind_name(tmpl.kind);
    doc["vertices"] = rows_json(tmpl.vertices, 3);
    if (tmpl.kind == deform::InstanceKind::Human) {
        doc["weights"] = rows_json(tmpl.weights, tmpl.joint_count);
    }
    if (std::any_of(tmpl.offsets.begin(), tmpl.offsets.end(), [](double x) { return x != 0.0; })) {
        doc["offsets"] = rows_json(tmpl.offsets, 3);
    }
    return doc;
}

deform::SkinnedTemplate load_template(const std::filesystem::path& path) {
    return rethrow_with_context(path.string(), [&] { return parse_template(read_json(path)); });
}

InstancePose parse_pose(const json& doc, const deform::SkinnedTemplate& tmpl) {
    const Cursor root(doc, "");
    InstancePose pose;
    if (tmpl.kind == deform::InstanceKind::Human) {
        if (root.array_size() != tmpl.joint_count) {
            root.fail("expected " + std::to_string(tmpl.joint_count) + " joint matrices, got " +
                      std::to_string(doc.size()));
        }
        for (std::size_t k = 0; k < tmpl.joint_count; ++k) {
            const auto m = parse_matrix4(root.at(k));
            pose.joints.rotations.push_back(m.topLeftCorner<3, 3>());
            pose.joints.translations.push_back(m.topRightCorner<3, 1>());
        }
        pose.joints.validate();
    } else {
        const auto m = parse_matrix4(root);
        pose.rigid.rotation = m.topLeftCorner<3, 3>();
        pose.rigid.translation = m.topRightCorner<3, 1>();
        pose.rigid.validate();
    }
    return pose;
}

json pose_to_json(const InstancePose& pose, deform::InstanceKind kind) {
    if (kind == deform::InstanceKind::Object) {
        return matrix4_json(pose.rigid.rotation, pose.rigid.translation);
    }
    json out = json::array();
    for (std::size_t k = 0; k < pose.joints.size(); ++k) {
        out.push_back(matrix4_json(pose.joints.rotations[k], pose.joints.translations[k]));
    }
    return out;
}

InstancePose load_pose(const std::filesystem::path& path, const deform::SkinnedTemplate& tmpl) {
    if (!std::filesystem::exists(path)) {
        throw FormatError("missing pose file " + path.string());
    }
    return rethrow_with_context(path.string(), [&] { return parse_pose(read_json(path), tmpl); });
}

namespace {

void check_mask(const Scene& scene, const Mask& mask, const std::string& where) {
    std::set<int> allowed{0};
    for (const auto& inst : scene.instances) allowed.insert(inst.id + 1);
    for (const auto v : mask.labels) {
        if (!allowed.count(v)) {
            throw FormatError(where + ": mask value " + std::to_string(v) + " matches no instance");
        }
    }
}

} // namespace

FrameData load_frame(const Scene& scene, std::size_t frame) {
    if (frame >= scene.frames.size()) {
        throw ContractViolation("frame " + std::to_string(frame) + " is not in the scene");
    }
    const auto& rec = scene.frames[frame];
    FrameData data;
    data.index = rec.index;
    for (const auto& cam : scene.cameras) {
        const auto image_path = scene.root / rec.images.at(cam.id);
        auto image = read_png(image_path);
        if (image.width != cam.width || image.height != cam.height) {
            throw FormatError(image_path.string() + ": image size differs from camera " + std::to_string(cam.id));
        }
        const auto mask_path = scene.root / rec.masks.at(cam.id);
        auto mask = read_mask_png(mask_path);
        if (mask.width != cam.width || mask.height != cam.height) {
            throw FormatError(mask_path.string() + ": mask size differs from camera " + std::to_string(cam.id));
        }
        check_mask(scene, mask, mask_path.string());
        data.images.emplace(cam.id, std::move(image));
        data.masks.emplace(cam.id, std::move(mask));
    }
    for (const auto& inst : scene.instances) {
        const auto it = rec.poses.find(inst.id);
        if (it == rec.poses.end()) {
            throw FormatError("frame " + std::to_string(rec.index) + ": no pose for instance " +
                              std::to_string(inst.id));
        }
        try {
            data.poses.emplace(inst.id, load_pose(scene.root / it->second, inst.tmpl));
        } catch (const FormatError& e) {
            throw FormatError("frame " + std::to_string(rec.index) + ", instance " + std::to_string(inst.id) +
                              ": " + e.what());
        }
    }
    return data;
}

Scene load_scene(const std::filesystem::path& dir) {
    const auto path = dir / "scene.json";
    Scene scene = rethrow_with_context(path.string(), [&] { return parse_scene_json(read_json(path)); });
    scene.root = dir;
    for (auto& inst : scene.instances) {
        inst.tmpl = load_template(dir / inst.template_path);
        if (inst.tmpl.kind != inst.kind) {
            throw FormatError((dir / inst.template_path).string() + ": template kind differs from instance " +
                              std::to_string(inst.id));
        }
    }
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        load_frame(scene, f);
    }
    return scene;
}

} // namespace mmgs::io
