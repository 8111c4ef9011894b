#pragma once

#include "mmgs/ad/nn.hpp"
#include "mmgs/common/rng.hpp"
#include "mmgs/deform/deformation.hpp"
#include "mmgs/fusion/fusion.hpp"
#include "mmgs/interaction/interaction.hpp"
#include "mmgs/io/checkpoint.hpp"
#include "mmgs/io/scene.hpp"
#include "mmgs/raster/rasterizer.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmgs::pipeline {

enum class Variant { Full, NoFusion, NoInteraction, None };

const char* variant_name(Variant variant);
/// Accepts full, no_fusion, no_interaction, none.
Variant parse_variant(std::string_view name);
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::Full, Variant::NoFusion,
                                                        Variant::NoInteraction, Variant::None};

inline bool uses_fusion(Variant v) { return v == Variant::Full || v == Variant::NoInteraction; }
inline bool uses_interaction(Variant v) { return v == Variant::Full || v == Variant::NoFusion; }

struct ModelConfig {
    Variant variant = Variant::Full;
    int sh_degree = 1;
    std::uint64_t seed = 0;
    /// Cameras whose images may feed the fusion stage. Empty means all.
    std::vector<int> context_cameras;
    fusion::FusionConfig fusion;
    interaction::InteractionConfig interaction;
    raster::RasterSettings raster;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& doc);
};

/// Everything one frame contributes: poses, context images, targets and masks.
template <std::floating_point T>
struct FrameInputs {
    int index = 0;
    std::vector<io::InstancePose> poses;          // scene instance order
    std::map<int, ad::Tensor<T>> context_images;  // camera id -> [H x W x 3]
    std::vector<std::vector<fusion::ViewArea>> areas; // per instance, over context cameras
    std::map<int, std::vector<T>> targets;        // camera id -> H x W x 3
    std::map<int, std::vector<std::uint8_t>> masks; // camera id -> union mask
};

/// All frames of a scene, loaded once.
template <std::floating_point T>
struct Dataset {
    const io::Scene* scene = nullptr;
    std::vector<int> context_cameras;
    std::vector<FrameInputs<T>> frames;
};

/// `context_cameras` empty means all cameras.
template <std::floating_point T>
Dataset<T> load_dataset(const io::Scene& scene, std::vector<int> context_cameras = {});

/// Which refinement modules ran in a forward pass.
struct ModuleActivity {
    bool deformation = false;
    bool encoder = false;
    bool fusion = false;
    bool lifted_projection = false; // no_fusion node features
    bool interaction = false;
    std::size_t active_instances = 0;
};

template <std::floating_point T>
struct FrameOutput {
    std::vector<gs::GaussianSet<T>> stage0;
    std::vector<gs::GaussianSet<T>> stage1;
    std::vector<gs::GaussianSet<T>> stage2; // final attributes of the variant
    interaction::SceneGraph graph;
    std::vector<std::size_t> active;
    std::vector<ad::Tensor<T>> images; // one per requested camera, [H x W x 3]
    ModuleActivity activity;
};

/// Trainable per-instance canonical attributes.
template <std::floating_point T>
struct CanonicalAttributes {
    ad::Tensor<T> sh, opacity_logit, rotation, log_scale;
};

/// Networks and per-instance parameters of the three-stage refinement. Every
/// module is created regardless of the variant, in a fixed order, so all
/// variants start from the same parameters for a given seed.
template <std::floating_point T>
class Model {
public:
    Model(const io::Scene& scene, ModelConfig config);

    const ModelConfig& config() const { return config_; }
    Variant variant() const { return config_.variant; }
    const io::Scene& scene() const { return *scene_; }

    ad::ParameterStore<T>& store() { return store_; }
    const ad::ParameterStore<T>& store() const { return store_; }
    /// The canonical attribute tensors (subset of store()).
    std::vector<ad::Tensor<T>> attribute_parameters() const;
    /// store() minus attribute_parameters().
    std::vector<ad::Tensor<T>> network_parameters() const;

    /// Canonical set of instance i (template vertices as centers).
    gs::GaussianSet<T> canonical_set(std::size_t instance) const;

    /// Deformation, then the stages enabled by the variant, then one render
    /// per requested camera. Dropout is active only when `training`.
    FrameOutput<T> forward_frame(const FrameInputs<T>& frame, std::span<const int> cameras, bool training,
                                 Rng& rng) const;

    /// Rescales canonical quaternions to unit length.
    void renormalize_rotations();

    io::Checkpoint to_checkpoint() const;
    /// Overwrites every parameter from `checkpoint`; names and shapes must match.
    void load_parameters(const io::Checkpoint& checkpoint);

    // Networks. Public so tests can perturb zero-initialized heads.
    std::map<std::size_t, deform::LbsNetwork<T>> lbs; // keyed by joint count
    fusion::ImageEncoder<T> encoder;
    fusion::FusionDecoder<T> fusion_decoder;
    ad::Linear<T> lifted_projection; // no_fusion node features
    interaction::Gat<T> gat;
    interaction::InteractionDecoder<T> interaction_decoder;
    std::vector<CanonicalAttributes<T>> canonical;

private:
    std::vector<gs::GaussianSet<T>> stage0(const FrameInputs<T>& frame, ModuleActivity& activity) const;

    const io::Scene* scene_;
    ModelConfig config_;
    ad::ParameterStore<T> store_;
    std::vector<ad::Tensor<T>> base_weights_; // per instance, humans only
    std::vector<ad::Tensor<T>> template_centers_;
};

/// Builds a model from a checkpoint's config echo and tensors.
template <std::floating_point T>
Model<T> model_from_checkpoint(const io::Scene& scene, const io::Checkpoint& checkpoint);

} // namespace mmgs::pipeline
