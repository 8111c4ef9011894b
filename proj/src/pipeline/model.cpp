#include "mmgs/pipeline/model.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <set>

namespace mmgs::pipeline {

const char* variant_name(Variant variant) {
    switch (variant) {
    case Variant::Full: return "full";
    case Variant::NoFusion: return "no_fusion";
    case Variant::NoInteraction: return "no_interaction";
    case Variant::None: return "none";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants) {
        if (name == variant_name(v)) {
            return v;
        }
    }
    throw ContractViolation("unknown variant '" + std::string(name) +
                            "' (expected full, no_fusion, no_interaction or none)");
}

nlohmann::json ModelConfig::to_json() const {
    return {
        {"variant", variant_name(variant)},
        {"sh_degree", sh_degree},
        {"seed", seed},
        {"context_cameras", context_cameras},
        {"fusion",
         {{"gamma", fusion.gamma},
          {"context_views", fusion.context_views},
          {"instance_feature_dim", fusion.instance_feature_dim},
          {"feature_channels", fusion.feature_channels},
          {"hidden1", fusion.hidden1},
          {"hidden2", fusion.hidden2},
          {"update_all_sh_bands", fusion.update_all_sh_bands},
          {"per_gaussian_visibility", fusion.per_gaussian_visibility}}},
        {"interaction",
         {{"feature_dim", interaction.feature_dim},
          {"heads", interaction.heads},
          {"attention_dropout", interaction.attention_dropout},
          {"leaky_slope", interaction.leaky_slope},
          {"tau_deg", interaction.tau_deg},
          {"decoder_hidden", interaction.decoder_hidden},
          {"max_translation", interaction.max_translation}}},
        {"raster", {{"tile_size", raster.tile_size}, {"low_pass", raster.low_pass}}},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
    try {
        ModelConfig c;
        c.variant = parse_variant(doc.at("variant").get<std::string>());
        c.sh_degree = doc.at("sh_degree").get<int>();
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.context_cameras = doc.at("context_cameras").get<std::vector<int>>();
        const auto& f = doc.at("fusion");
        c.fusion.gamma = f.at("gamma").get<double>();
        c.fusion.context_views = f.at("context_views").get<std::size_t>();
        c.fusion.instance_feature_dim = f.at("instance_feature_dim").get<std::size_t>();
        c.fusion.feature_channels = f.at("feature_channels").get<std::size_t>();
        c.fusion.hidden1 = f.at("hidden1").get<std::size_t>();
        c.fusion.hidden2 = f.at("hidden2").get<std::size_t>();
        c.fusion.update_all_sh_bands = f.at("update_all_sh_bands").get<bool>();
        c.fusion.per_gaussian_visibility = f.at("per_gaussian_visibility").get<bool>();
        const auto& i = doc.at("interaction");
        c.interaction.feature_dim = i.at("feature_dim").get<std::size_t>();
        c.interaction.heads = i.at("heads").get<std::size_t>();
        c.interaction.attention_dropout = i.at("attention_dropout").get<double>();
        c.interaction.leaky_slope = i.at("leaky_slope").get<double>();
        c.interaction.tau_deg = i.at("tau_deg").get<std::size_t>();
        c.interaction.decoder_hidden = i.at("decoder_hidden").get<std::size_t>();
        c.interaction.max_translation = i.at("max_translation").get<double>();
        const auto& r = doc.at("raster");
        c.raster.tile_size = r.at("tile_size").get<int>();
        c.raster.low_pass = r.at("low_pass").get<double>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
}

namespace {

std::vector<int> resolve_context_cameras(const io::Scene& scene, std::vector<int> requested) {
    if (requested.empty()) {
        return scene.camera_ids();
    }
    std::sort(requested.begin(), requested.end());
    requested.erase(std::unique(requested.begin(), requested.end()), requested.end());
    for (int id : requested) {
        scene.camera(id); // throws for unknown ids
    }
    return requested;
}

template <std::floating_point T>
bool same_values(const ad::Tensor<T>& a, const ad::Tensor<T>& b) {
    if (a.node() == b.node()) {
        return true;
    }
    const auto x = a.data(), y = b.data();
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
}

} // namespace

template <std::floating_point T>
Dataset<T> load_dataset(const io::Scene& scene, std::vector<int> context_cameras) {
    Dataset<T> data;
    data.scene = &scene;
    data.context_cameras = resolve_context_cameras(scene, std::move(context_cameras));
    const std::set<int> context(data.context_cameras.begin(), data.context_cameras.end());
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        io::FrameData raw = io::load_frame(scene, f);
        FrameInputs<T> in;
        in.index = raw.index;
        for (const auto& inst : scene.instances) {
            in.poses.push_back(raw.poses.at(inst.id));
        }
        in.areas.resize(scene.instances.size());
        for (const auto& cam : scene.cameras) {
            const io::Image& image = raw.images.at(cam.id);
            const io::Mask& mask = raw.masks.at(cam.id);
            std::vector<T> pixels(image.pixels.begin(), image.pixels.end());
            std::vector<std::uint8_t> union_mask(mask.labels.size());
            std::transform(mask.labels.begin(), mask.labels.end(), union_mask.begin(),
                           [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
            if (context.contains(cam.id)) {
                in.context_images.emplace(
                    cam.id, ad::Tensor<T>({static_cast<std::size_t>(image.height),
                                           static_cast<std::size_t>(image.width), 3},
                                          pixels));
                for (std::size_t i = 0; i < scene.instances.size(); ++i) {
                    const auto label = static_cast<std::uint8_t>(scene.instances[i].id + 1);
                    const auto area = static_cast<std::size_t>(
                        std::count(mask.labels.begin(), mask.labels.end(), label));
                    in.areas[i].push_back({cam.id, area});
                }
            }
            in.targets.emplace(cam.id, std::move(pixels));
            in.masks.emplace(cam.id, std::move(union_mask));
        }
        data.frames.push_back(std::move(in));
    }
    return data;
}

template <std::floating_point T>
Model<T>::Model(const io::Scene& scene, ModelConfig config) : scene_(&scene), config_(std::move(config)) {
    if (scene.instances.empty()) {
        throw ContractViolation("scene has no instances");
    }
    config_.context_cameras = resolve_context_cameras(scene, config_.context_cameras);
    const int degree = config_.sh_degree;
    Rng rng(config_.seed);

    // Fixed creation order: joint networks, encoder, fusion decoder, lifted
    // projection, GAT, interaction decoder, then canonical attributes.
    std::set<std::size_t> joint_counts;
    for (const auto& inst : scene.instances) {
        if (inst.kind == deform::InstanceKind::Human) {
            joint_counts.insert(inst.tmpl.joint_count);
        }
    }
    for (std::size_t k : joint_counts) {
        lbs.emplace(k, deform::make_lbs_network<T>(store_, "lbs.k" + std::to_string(k), k, rng));
    }
    encoder = fusion::make_image_encoder<T>(store_, "encoder", config_.fusion.feature_channels, rng);
    fusion_decoder = fusion::make_fusion_decoder<T>(store_, "fusion", config_.fusion, degree, rng);
    lifted_projection = ad::make_linear<T>(store_, "lifted_projection", config_.fusion.feature_channels,
                                           config_.interaction.feature_dim, rng);
    gat = interaction::make_gat<T>(store_, "gat", config_.interaction, rng);
    interaction_decoder = interaction::make_interaction_decoder<T>(store_, "interaction", config_.interaction, rng);

    for (const auto& inst : scene.instances) {
        const auto& tmpl = inst.tmpl;
        auto init = deform::initialize_gaussian_attributes<T>(tmpl.vertices, degree);
        const std::string prefix = "instance" + std::to_string(inst.id) + ".";
        auto add = [&](const char* name, const ad::Tensor<T>& t) {
            return store_.add(prefix + name, t.shape(), t.to_vector());
        };
        canonical.push_back({add("sh", init.sh), add("opacity_logit", init.opacity_logit),
                             add("rotation", init.rotation), add("log_scale", init.log_scale)});
        template_centers_.push_back(
            ad::Tensor<T>({tmpl.vertex_count, 3}, std::vector<T>(tmpl.vertices.begin(), tmpl.vertices.end())));
        if (inst.kind == deform::InstanceKind::Human) {
            base_weights_.push_back(ad::Tensor<T>({tmpl.vertex_count, tmpl.joint_count},
                                                  std::vector<T>(tmpl.weights.begin(), tmpl.weights.end())));
        } else {
            base_weights_.emplace_back();
        }
    }
}

template <std::floating_point T>
std::vector<ad::Tensor<T>> Model<T>::attribute_parameters() const {
    std::vector<ad::Tensor<T>> out;
    for (const auto& c : canonical) {
        out.insert(out.end(), {c.sh, c.opacity_logit, c.rotation, c.log_scale});
    }
    return out;
}

template <std::floating_point T>
std::vector<ad::Tensor<T>> Model<T>::network_parameters() const {
    std::set<const void*> attributes;
    for (const auto& t : attribute_parameters()) {
        attributes.insert(t.node().get());
    }
    std::vector<ad::Tensor<T>> out;
    for (const auto& p : store_.parameters()) {
        if (!attributes.contains(p.node().get())) {
            out.push_back(p);
        }
    }
    return out;
}

template <std::floating_point T>
gs::GaussianSet<T> Model<T>::canonical_set(std::size_t instance) const {
    const auto& c = canonical.at(instance);
    gs::GaussianSet<T> set;
    set.sh_degree = config_.sh_degree;
    set.centers = template_centers_.at(instance);
    set.sh = c.sh;
    set.opacity_logit = c.opacity_logit;
    set.rotation = c.rotation;
    set.log_scale = c.log_scale;
    return set;
}

template <std::floating_point T>
std::vector<gs::GaussianSet<T>> Model<T>::stage0(const FrameInputs<T>& frame, ModuleActivity& activity) const {
    const auto& instances = scene_->instances;
    if (frame.poses.size() != instances.size()) {
        throw ContractViolation("frame " + std::to_string(frame.index) + " has " +
                                std::to_string(frame.poses.size()) + " poses for " +
                                std::to_string(instances.size()) + " instances");
    }
    std::vector<gs::GaussianSet<T>> sets;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const auto canonical_i = canonical_set(i);
        if (inst.kind == deform::InstanceKind::Human) {
            const auto m = deform::predict_modulation(lbs.at(inst.tmpl.joint_count), inst.tmpl);
            const auto w = deform::modulate_weights(base_weights_[i], m);
            sets.push_back(deform::pose_human(inst.tmpl, canonical_i, frame.poses[i].joints, w));
        } else {
            sets.push_back(deform::pose_object(inst.tmpl, canonical_i, frame.poses[i].rigid));
        }
    }
    activity.deformation = true;
    return sets;
}

template <std::floating_point T>
FrameOutput<T> Model<T>::forward_frame(const FrameInputs<T>& frame, std::span<const int> cameras, bool training,
                                       Rng& rng) const {
    FrameOutput<T> out;
    const Variant variant = config_.variant;
    const std::size_t m = scene_->instances.size();
    out.stage0 = stage0(frame, out.activity);

    // Encoder features per context camera, computed on first use.
    std::map<int, ad::Tensor<T>> features;
    auto feature_map = [&](int camera) -> const ad::Tensor<T>& {
        auto it = features.find(camera);
        if (it == features.end()) {
            const auto img = frame.context_images.find(camera);
            if (img == frame.context_images.end()) {
                throw ContractViolation("frame " + std::to_string(frame.index) + " has no context image for camera " +
                                        std::to_string(camera));
            }
            it = features.emplace(camera, fusion::encode_image(encoder, img->second)).first;
            out.activity.encoder = true;
        }
        return it->second;
    };
    const std::size_t n_ctx = std::min(config_.fusion.context_views, config_.context_cameras.size());

    std::vector<ad::Tensor<T>> node_features;
    if (uses_fusion(variant)) {
        for (std::size_t i = 0; i < m; ++i) {
            const auto& s0 = out.stage0[i];
            const auto selection = fusion::select_context_views(frame.areas.at(i), n_ctx);
            std::vector<ad::Tensor<T>> per_view;
            std::vector<std::vector<std::uint8_t>> visible;
            for (int cam_id : selection.camera_ids) {
                const auto& cam = scene_->camera(cam_id);
                const auto lifted = fusion::lift_features(feature_map(cam_id), s0.centers, cam);
                per_view.push_back(fusion::view_dependent_features(lifted, s0));
                if (config_.fusion.per_gaussian_visibility) {
                    visible.push_back(fusion::in_view(s0.centers, cam));
                }
            }
            const auto fused = config_.fusion.per_gaussian_visibility
                                   ? fusion::cross_view_fuse_visible<T>(per_view, visible, config_.fusion.gamma)
                                   : fusion::cross_view_fuse<T>(per_view, config_.fusion.gamma);
            auto result = fusion::decode_fusion(fusion_decoder, fused, s0);
            if (!same_values(result.refined.centers, s0.centers)) {
                throw ContractViolation("stage 1 modified the centers of instance " +
                                        std::to_string(scene_->instances[i].id));
            }
            out.stage1.push_back(std::move(result.refined));
            node_features.push_back(result.instance_feature);
        }
        out.activity.fusion = true;
    } else {
        out.stage1 = out.stage0;
        if (uses_interaction(variant)) {
            // Node features from mean-pooled lifted features.
            for (std::size_t i = 0; i < m; ++i) {
                const auto selection = fusion::select_context_views(frame.areas.at(i), n_ctx);
                ad::Tensor<T> sum;
                for (int cam_id : selection.camera_ids) {
                    const auto lifted = fusion::lift_features(feature_map(cam_id), out.stage0[i].centers,
                                                              scene_->camera(cam_id));
                    sum = sum.defined() ? ad::add(sum, lifted) : lifted;
                }
                const auto pooled = ad::mean_rows(sum);
                node_features.push_back(
                    lifted_projection(ad::scale(pooled, T(1) / static_cast<T>(selection.camera_ids.size()))));
            }
            out.activity.lifted_projection = true;
        }
    }

    if (uses_interaction(variant)) {
        std::vector<interaction::Aabb> boxes;
        for (const auto& s : out.stage0) {
            boxes.push_back(interaction::instance_aabb(s.centers));
        }
        out.graph = interaction::build_scene_graph(boxes);
        out.active = interaction::active_instances(out.graph, config_.interaction.tau_deg);
        const auto nodes = ad::concat_rows<T>(node_features);
        const auto aggregated = interaction::gat_aggregate(gat, nodes, out.graph, training, rng);
        interaction::InstanceResiduals<T> residuals;
        if (!out.active.empty()) {
            residuals = interaction::decode_interaction(interaction_decoder,
                                                        ad::gather_rows<T>(aggregated.features, out.active));
        }
        out.stage2 = interaction::apply_stage2_updates<T>(out.stage1, residuals, out.active);
        for (std::size_t i = 0; i < m; ++i) {
            if (!same_values(out.stage2[i].rotation, out.stage1[i].rotation) ||
                !same_values(out.stage2[i].log_scale, out.stage1[i].log_scale)) {
                throw ContractViolation("stage 2 modified rotation or scale of instance " +
                                        std::to_string(scene_->instances[i].id));
            }
        }
        out.activity.interaction = true;
        out.activity.active_instances = out.active.size();
    } else {
        out.stage2 = out.stage1;
    }

    const auto combined = gs::concat<T>(out.stage2);
    for (int cam_id : cameras) {
        out.images.push_back(raster::render(combined, scene_->camera(cam_id), {0, 0, 0}, config_.raster).image);
    }
    return out;
}

template <std::floating_point T>
void Model<T>::renormalize_rotations() {
    for (auto& c : canonical) {
        auto q = c.rotation.mutable_data();
        for (std::size_t g = 0; g + 3 < q.size(); g += 4) {
            const T norm = std::sqrt(q[g] * q[g] + q[g + 1] * q[g + 1] + q[g + 2] * q[g + 2] + q[g + 3] * q[g + 3]);
            if (norm == T(0)) {
                q[g] = T(1);
            } else if (std::isfinite(norm)) {
                for (int k = 0; k < 4; ++k) {
                    q[g + k] /= norm;
                }
            } // non-finite values are left for the loss check to report
        }
    }
}

template <std::floating_point T>
io::Checkpoint Model<T>::to_checkpoint() const {
    io::Checkpoint ckpt;
    for (const auto& p : store_.parameters()) {
        ckpt.tensors.push_back(io::to_checkpoint_tensor(p.name(), p));
    }
    ckpt.config = config_.to_json();
    return ckpt;
}

template <std::floating_point T>
void Model<T>::load_parameters(const io::Checkpoint& checkpoint) {
    if (checkpoint.tensors.size() != store_.size()) {
        throw FormatError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                          " tensors, the model expects " + std::to_string(store_.size()));
    }
    for (auto& p : store_.parameters()) {
        const auto* stored = checkpoint.find(p.name());
        if (!stored) {
            throw FormatError("checkpoint is missing tensor '" + p.name() + "'");
        }
        io::assign_from_checkpoint(*stored, p);
    }
}

template <std::floating_point T>
Model<T> model_from_checkpoint(const io::Scene& scene, const io::Checkpoint& checkpoint) {
    Model<T> model(scene, ModelConfig::from_json(checkpoint.config));
    model.load_parameters(checkpoint);
    return model;
}

template struct FrameInputs<float>;
template struct FrameInputs<double>;
template Dataset<float> load_dataset(const io::Scene&, std::vector<int>);
template Dataset<double> load_dataset(const io::Scene&, std::vector<int>);
template class Model<float>;
template class Model<double>;
template Model<float> model_from_checkpoint(const io::Scene&, const io::Checkpoint&);
template Model<double> model_from_checkpoint(const io::Scene&, const io::Checkpoint&);

} // namespace mmgs::pipeline
