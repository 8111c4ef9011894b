#include "mmgs/common/error.hpp"
#include "mmgs/interaction/interaction.hpp"
#include "mmgs/io/binary.hpp"
#include "mmgs/io/checkpoint.hpp"
#include "mmgs/io/generator.hpp"
#include "mmgs/io/image.hpp"
#include "mmgs/io/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

namespace mmgs::io {
namespace {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("mmgs_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
        }
    }
    return out;
}

/// One generated scene shared by the tests below.
const fs::path& shared_scene() {
    static TempDir dir("io_scene");
    static bool generated = false;
    if (!generated) {
        generate_synthetic_scene({}, dir.path() / "scene");
        generated = true;
    }
    static const fs::path path = dir.path() / "scene";
    return path;
}

TEST(Binary, LittleEndianLayout) {
    ByteWriter w;
    w.u16(0x0102);
    w.u32(0x03040506);
    w.f32(1.0f);
    const auto& b = w.buffer();
    ASSERT_EQ(b.size(), 10u);
    EXPECT_EQ(b[0], 0x02);
    EXPECT_EQ(b[1], 0x01);
    EXPECT_EQ(b[2], 0x06);
    EXPECT_EQ(b[5], 0x03);
    EXPECT_EQ(b[9], 0x3f);
    ByteReader r(b, "buffer");
    EXPECT_EQ(r.u16(), 0x0102);
    EXPECT_EQ(r.u32(), 0x03040506u);
    EXPECT_EQ(r.f32(), 1.0f);
    EXPECT_THROW(r.u8(), FormatError);
}

TEST(Image, PngRoundTripIsExactOnEightBitValues) {
    TempDir dir("png");
    Image img{5, 3, std::vector<float>(45)};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>((i * 37) % 256) / 255.0f;
    write_png(dir.path() / "a.png", img);
    const auto back = read_png(dir.path() / "a.png");
    ASSERT_EQ(back.width, 5);
    ASSERT_EQ(back.height, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_EQ(back.pixels[i], img.pixels[i]);

    Mask m{4, 2, {0, 1, 2, 3, 4, 5, 6, 255}};
    write_mask_png(dir.path() / "m.png", m);
    EXPECT_EQ(read_mask_png(dir.path() / "m.png").labels, m.labels);
}

TEST(Image, FloatDumpRoundTripIsBitExact) {
    TempDir dir("dump");
    Image img{3, 2, {0.1f, -2.5f, 1e-30f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f, 1.0f, 7.25f,
                     0.0f, 1.5f, 2.5f, 3.5f, 4.5f, 5.5f}};
    write_float_dump(dir.path() / "a.bin", img);
    const auto back = read_float_dump(dir.path() / "a.bin");
    EXPECT_EQ(std::memcmp(back.pixels.data(), img.pixels.data(), img.pixels.size() * sizeof(float)), 0);
    EXPECT_EQ(slurp(dir.path() / "a.bin").substr(0, 8), "MMGSIMG1");
}

Checkpoint sample_checkpoint() {
    ad::Tensor<float> a({2, 3}, {1.0f, -0.0f, 3.5f, 1e-38f, std::nextafter(1.0f, 2.0f), -7.0f});
    ad::Tensor<double> b({4}, {0.1, 0.2, 1e300, -1e-300});
    Checkpoint c;
    c.tensors.push_back(to_checkpoint_tensor("net.weight", a));
    c.tensors.push_back(to_checkpoint_tensor("instance0.sh", b));
    c.config = {{"variant", "full"}, {"seed", 7}};
    return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
    TempDir dir("ckpt");
    const auto c = sample_checkpoint();
    save_checkpoint(dir.path() / "c.ckpt", c);
    const auto back = load_checkpoint(dir.path() / "c.ckpt");
    ASSERT_EQ(back.tensors.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.tensors[i].name, c.tensors[i].name);
        EXPECT_EQ(back.tensors[i].shape, c.tensors[i].shape);
        EXPECT_EQ(back.tensors[i].dtype, c.tensors[i].dtype);
    }
    EXPECT_EQ(std::memcmp(back.tensors[0].f32.data(), c.tensors[0].f32.data(), 6 * sizeof(float)), 0);
    EXPECT_EQ(std::memcmp(back.tensors[1].f64.data(), c.tensors[1].f64.data(), 4 * sizeof(double)), 0);
    EXPECT_EQ(back.config, c.config);

    ad::Tensor<float> target = ad::Tensor<float>::zeros({2, 3});
    assign_from_checkpoint(back.tensors[0], target);
    EXPECT_EQ(target.at(4), std::nextafter(1.0f, 2.0f));
    ad::Tensor<float> wrong = ad::Tensor<float>::zeros({3, 2});
    EXPECT_THROW(assign_from_checkpoint(back.tensors[0], wrong), FormatError);
}

TEST(Checkpoint, HeaderLayout) {
    TempDir dir("ckpt_layout");
    save_checkpoint(dir.path() / "c.ckpt", sample_checkpoint());
    const auto bytes = slurp(dir.path() / "c.ckpt");
    EXPECT_EQ(bytes.substr(0, 4), "MMGS");
    EXPECT_EQ(bytes[4], 1); // version, little endian
    EXPECT_EQ(bytes[8], 2); // tensor count
    EXPECT_EQ(bytes[12], 10); // first name length
    EXPECT_EQ(bytes.substr(14, 10), "net.weight");
    EXPECT_EQ(bytes[24], 0);  // f32
    EXPECT_EQ(bytes[25], 2);  // rank
}

TEST(Checkpoint, BadMagicIsAFormatError) {
    TempDir dir("ckpt_magic");
    save_checkpoint(dir.path() / "c.ckpt", sample_checkpoint());
    auto bytes = slurp(dir.path() / "c.ckpt");
    bytes.replace(0, 4, "XXXX");
    std::ofstream(dir.path() / "x.ckpt", std::ios::binary) << bytes;
    try {
        load_checkpoint(dir.path() / "x.ckpt");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
}

TEST(Checkpoint, TruncationReportsByteOffset) {
    TempDir dir("ckpt_trunc");
    save_checkpoint(dir.path() / "c.ckpt", sample_checkpoint());
    const auto bytes = slurp(dir.path() / "c.ckpt");
    for (std::size_t cut : {std::size_t{6}, std::size_t{30}, bytes.size() - 3}) {
        std::ofstream(dir.path() / "t.ckpt", std::ios::binary | std::ios::trunc) << bytes.substr(0, cut);
        try {
            load_checkpoint(dir.path() / "t.ckpt");
            FAIL() << "expected FormatError at cut " << cut;
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
        }
    }
}

TEST(Checkpoint, WrongVersionIsRejected) {
    TempDir dir("ckpt_version");
    save_checkpoint(dir.path() / "c.ckpt", sample_checkpoint());
    auto bytes = slurp(dir.path() / "c.ckpt");
    bytes[4] = 2;
    std::ofstream(dir.path() / "v.ckpt", std::ios::binary) << bytes;
    EXPECT_THROW(load_checkpoint(dir.path() / "v.ckpt"), FormatError);
}

nlohmann::json minimal_scene_json() {
    return nlohmann::json::parse(R"({
      "version": 1,
      "cameras": [{"id": 0, "K": [50,0,16, 0,50,16, 0,0,1], "R": [1,0,0, 0,1,0, 0,0,1],
                   "t": [0,0,3], "width": 32, "height": 32}],
      "instances": [{"id": 0, "kind": "object", "template": "t.json"}],
      "frames": [{"index": 0, "images": {"0": "i.png"}, "masks": {"0": "m.png"},
                  "poses": {"0": "p.json"}}]
    })");
}

TEST(SceneJson, MinimalDocumentParses) {
    const auto scene = parse_scene_json(minimal_scene_json());
    ASSERT_EQ(scene.cameras.size(), 1u);
    EXPECT_EQ(scene.cameras[0].width, 32);
    EXPECT_EQ(scene.frames[0].poses.at(0), "p.json");
}

TEST(SceneJson, MissingIntrinsicsNamesPointer) {
    auto doc = minimal_scene_json();
    doc["cameras"][0].erase("K");
    try {
        parse_scene_json(doc);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.pointer(), "/cameras/0/K");
    }
}

TEST(SceneJson, ViolationsCarryPointers) {
    auto bad_version = minimal_scene_json();
    bad_version["version"] = 2;
    EXPECT_THROW(parse_scene_json(bad_version), SchemaError);

    auto dup = minimal_scene_json();
    dup["cameras"].push_back(dup["cameras"][0]);
    EXPECT_THROW(parse_scene_json(dup), SchemaError);

    auto missing_pose = minimal_scene_json();
    missing_pose["frames"][0]["poses"] = nlohmann::json::object();
    EXPECT_THROW(parse_scene_json(missing_pose), SchemaError);

    auto short_k = minimal_scene_json();
    short_k["cameras"][0]["K"] = {1, 2, 3};
    try {
        parse_scene_json(short_k);
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.pointer().rfind("/cameras/0/K", 0), 0u) << e.pointer();
    }
}

TEST(Template, WeightRowErrorNamesVertex) {
    auto doc = nlohmann::json::parse(
        R"({"kind": "human", "vertices": [[0,0,0],[1,0,0]], "weights": [[0.5,0.5],[0.7,0.2]]})");
    try {
        parse_template(doc);
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 1"), std::string::npos) << e.what();
    }
}

TEST(Template, JsonRoundTrip) {
    auto doc = nlohmann::json::parse(
        R"({"kind": "human", "vertices": [[0,0,0],[1,0,0]], "weights": [[0.25,0.75],[1,0]],
            "offsets": [[0,0,0.5],[0,0,0]]})");
    const auto t = parse_template(doc);
    const auto again = parse_template(template_to_json(t));
    EXPECT_EQ(again.vertices, t.vertices);
    EXPECT_EQ(again.weights, t.weights);
    EXPECT_EQ(again.offsets, t.offsets);
}

TEST(Pose, AcceptsNestedAndFlatMatrices) {
    deform::SkinnedTemplate obj;
    obj.kind = deform::InstanceKind::Object;
    const auto nested = parse_pose(nlohmann::json::parse("[[1,0,0,1],[0,1,0,2],[0,0,1,3],[0,0,0,1]]"), obj);
    const auto flat = parse_pose(nlohmann::json::parse("[1,0,0,1, 0,1,0,2, 0,0,1,3, 0,0,0,1]"), obj);
    EXPECT_EQ(nested.rigid.translation, flat.rigid.translation);
    EXPECT_DOUBLE_EQ(nested.rigid.translation.z(), 3.0);
    EXPECT_THROW(parse_pose(nlohmann::json::parse("[1,0,0,1, 0,1,0,2, 0,0,1,3, 0,0,1,1]"), obj), std::exception);
    EXPECT_THROW(parse_pose(nlohmann::json::parse("[2,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]"), obj), std::exception);
}

TEST(Generator, LoadsWithoutError) {
    const auto scene = load_scene(shared_scene());
    EXPECT_EQ(scene.cameras.size(), 4u);
    EXPECT_EQ(scene.instances.size(), 3u);
    EXPECT_EQ(scene.frames.size(), 3u);
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        const auto data = load_frame(scene, f);
        EXPECT_EQ(data.poses.size(), 3u);
        EXPECT_EQ(data.images.at(0).width, 64);
    }
}

TEST(Generator, ByteIdenticalAcrossRuns) {
    TempDir dir("gen_twice");
    generate_synthetic_scene({}, dir.path() / "again");
    const auto a = tree(shared_scene());
    const auto b = tree(dir.path() / "again");
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [name, bytes] : a) {
        ASSERT_TRUE(b.contains(name)) << name;
        EXPECT_TRUE(b.at(name) == bytes) << name;
    }
}

TEST(Generator, HumanWeightRowsSumToOne) {
    const auto scene = load_scene(shared_scene());
    for (const auto& inst : scene.instances) {
        if (inst.kind != deform::InstanceKind::Human) {
            EXPECT_TRUE(inst.tmpl.weights.empty());
            continue;
        }
        const auto k = inst.tmpl.joint_count;
        EXPECT_EQ(k, 4u);
        for (std::size_t v = 0; v < inst.tmpl.vertex_count; ++v) {
            double s = 0;
            for (std::size_t j = 0; j < k; ++j) s += inst.tmpl.weights[v * k + j];
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(Generator, SomeFrameHasAnInteractionEdge) {
    const auto scene = load_scene(shared_scene());
    std::size_t edges = 0;
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        const auto data = load_frame(scene, f);
        std::vector<interaction::Aabb> boxes;
        for (const auto& inst : scene.instances) {
            const auto& pose = data.poses.at(inst.id);
            const auto& t = inst.tmpl;
            std::vector<double> centers;
            if (inst.kind == deform::InstanceKind::Human) {
                const ad::Tensor<double> w({t.vertex_count, t.joint_count}, t.weights);
                const auto mod = deform::modulate_weights(w, ad::Tensor<double>::zeros(w.shape()));
                centers = deform::lbs_pose_centers(t, pose.joints, mod).to_vector();
            } else {
                centers = deform::pose_rigid_object(t.vertices, pose.rigid).centers;
            }
            boxes.push_back(interaction::instance_aabb(ad::Tensor<double>({t.vertex_count, 3}, centers)));
        }
        edges += interaction::build_scene_graph(boxes).edges.size();
    }
    EXPECT_GE(edges, 1u);
}

TEST(Generator, MaskPixelsDifferFromBackground) {
    const auto scene = load_scene(shared_scene());
    std::size_t inside = 0, differ = 0;
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        const auto data = load_frame(scene, f);
        for (const auto& [cam, mask] : data.masks) {
            const auto& img = data.images.at(cam);
            for (std::size_t p = 0; p < mask.labels.size(); ++p) {
                if (!mask.labels[p]) continue;
                ++inside;
                const float* px = &img.pixels[p * 3];
                differ += (px[0] != 0.0f || px[1] != 0.0f || px[2] != 0.0f);
            }
        }
    }
    ASSERT_GT(inside, 0u);
    EXPECT_GE(static_cast<double>(differ), 0.99 * static_cast<double>(inside));
}

TEST(Generator, SceneJsonRoundTrip) {
    const auto doc = read_json(shared_scene() / "scene.json");
    const auto scene = load_scene(shared_scene());
    EXPECT_EQ(scene_to_json(scene), doc);
    EXPECT_EQ(scene_to_json(parse_scene_json(scene_to_json(scene))), doc);
}

TEST(Generator, UnknownMaskValueIsNamed) {
    TempDir dir("bad_mask");
    fs::copy(shared_scene(), dir.path() / "s", fs::copy_options::recursive);
    const auto mask_path = dir.path() / "s" / "frames" / "1" / "mask_2.png";
    auto mask = read_mask_png(mask_path);
    mask.labels[5] = 200;
    write_mask_png(mask_path, mask);
    try {
        load_scene(dir.path() / "s");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("200"), std::string::npos) << e.what();
    }
}

TEST(Generator, MissingPoseNamesFrameAndInstance) {
    TempDir dir("missing_pose");
    fs::copy(shared_scene(), dir.path() / "s", fs::copy_options::recursive);
    fs::remove(dir.path() / "s" / "frames" / "2" / "pose_1.json");
    try {
        load_scene(dir.path() / "s");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("frame 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("instance 1"), std::string::npos) << msg;
    }
}

TEST(Generator, RejectsInvalidSpec) {
    TempDir dir("bad_spec");
    GeneratorSpec spec;
    spec.width = 16;
    EXPECT_THROW(generate_synthetic_scene(spec, dir.path() / "s"), ContractViolation);
    spec = {};
    spec.humans = 0;
    spec.objects = 0;
    EXPECT_THROW(generate_synthetic_scene(spec, dir.path() / "s"), ContractViolation);
}

} // namespace
} // namespace mmgs::io
