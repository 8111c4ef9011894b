#include "mmgs/interaction/interaction.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmgs::interaction {

bool Aabb::intersects(const Aabb& other) const {
    for (int a = 0; a < 3; ++a) {
        if (min[a] > other.max[a] || other.min[a] > max[a]) {
            return false;
        }
    }
    return true;
}

template <std::floating_point T>
Aabb instance_aabb(const ad::Tensor<T>& centers) {
    if (centers.rank() != 2 || centers.dim(1) != 3) {
        throw ContractViolation("instance_aabb expects G x 3 centers, got " +
                                ad::shape_string(centers.shape()));
    }
    if (centers.dim(0) == 0) {
        throw ContractViolation("instance_aabb: instance has no Gaussians");
    }
    const auto c = centers.data();
    Aabb box;
    box.min = box.max = Eigen::Vector3d(c[0], c[1], c[2]);
    for (std::size_t i = 1; i < centers.dim(0); ++i) {
        const Eigen::Vector3d p(c[i * 3], c[i * 3 + 1], c[i * 3 + 2]);
        box.min = box.min.cwiseMin(p);
        box.max = box.max.cwiseMax(p);
    }
    return box;
}

std::vector<std::vector<std::size_t>> SceneGraph::neighbors() const {
    std::vector<std::vector<std::size_t>> out(node_count);
    for (const auto& [i, p] : edges) {
        out[i].push_back(p);
        out[p].push_back(i);
    }
    for (auto& n : out) {
        std::sort(n.begin(), n.end());
    }
    return out;
}

namespace {

SceneGraph finish(std::size_t count, std::vector<std::pair<std::size_t, std::size_t>> edges) {
    SceneGraph g;
    g.node_count = count;
    std::sort(edges.begin(), edges.end());
    g.degree.assign(count, 0);
    for (const auto& [i, p] : edges) {
        ++g.degree[i];
        ++g.degree[p];
    }
    g.edges = std::move(edges);
    return g;
}

} // namespace

SceneGraph build_scene_graph(std::span<const Aabb> boxes) {
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return boxes[a].min.x() < boxes[b].min.x() || (boxes[a].min.x() == boxes[b].min.x() && a < b);
    });
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::size_t> open;
    for (const std::size_t i : order) {
        const double start = boxes[i].min.x();
        std::erase_if(open, [&](std::size_t j) { return boxes[j].max.x() < start; });
        for (const std::size_t j : open) {
            if (boxes[i].intersects(boxes[j])) {
                edges.emplace_back(std::min(i, j), std::max(i, j));
            }
        }
        open.push_back(i);
    }
    return finish(boxes.size(), std::move(edges));
}

SceneGraph build_scene_graph_bruteforce(std::span<const Aabb> boxes) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        for (std::size_t p = i + 1; p < boxes.size(); ++p) {
            if (boxes[i].intersects(boxes[p])) {
                edges.emplace_back(i, p);
            }
        }
    }
    return finish(boxes.size(), std::move(edges));
}

std::vector<std::size_t> active_instances(const SceneGraph& graph, std::size_t tau) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < graph.node_count; ++i) {
        if (graph.degree[i] >= tau) {
            out.push_back(i);
        }
    }
    return out;
}

std::string scene_graph_json(const SceneGraph& graph, int frame, std::span<const int> instance_ids,
                             std::span<const std::size_t> active) {
    if (instance_ids.size() != graph.node_count) {
        throw ContractViolation("scene_graph_json: one id per node required");
    }
    nlohmann::json j;
    j["frame"] = frame;
    j["nodes"] = std::vector<int>(instance_ids.begin(), instance_ids.end());
    auto edges = nlohmann::json::array();
    for (const auto& [i, p] : graph.edges) {
        edges.push_back({instance_ids[i], instance_ids[p]});
    }
    j["edges"] = std::move(edges);
    auto act = nlohmann::json::array();
    for (const auto i : active) {
        act.push_back(instance_ids[i]);
    }
    j["active"] = std::move(act);
    return j.dump();
}

namespace {

template <std::floating_point T>
ad::Tensor<T> glorot(ad::ParameterStore<T>& store, const std::string& name, std::size_t in,
                     std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<T> v(in * out);
    for (auto& x : v) {
        x = static_cast<T>(rng.uniform(-limit, limit));
    }
    return store.add(name, {in, out}, std::move(v));
}

template <std::floating_point T>
GatLayer<T> make_layer(ad::ParameterStore<T>& store, const std::string& name, std::size_t in,
                       std::size_t heads, std::size_t head_dim, bool concat, Rng& rng) {
    GatLayer<T> layer;
    layer.heads = heads;
    layer.head_dim = head_dim;
    layer.concat = concat;
    layer.weight = glorot(store, name + ".W", in, heads * head_dim, rng);
    for (std::size_t k = 0; k < heads; ++k) {
        layer.a_src.push_back(glorot(store, name + ".a_src" + std::to_string(k), head_dim, 1, rng));
        layer.a_dst.push_back(glorot(store, name + ".a_dst" + std::to_string(k), head_dim, 1, rng));
    }
    return layer;
}

template <std::floating_point T>
ad::Tensor<T> attend(const GatLayer<T>& layer, const ad::Tensor<T>& h, const ad::Tensor<T>& mask,
                     T slope, T dropout, bool training, Rng& rng,
                     std::vector<std::vector<T>>& attention_out) {
    const std::size_t m = ad::rows_of(h);
    const auto ones_row = ad::Tensor<T>::full({1, m}, T(1));
    const auto ones_col = ad::Tensor<T>::full({m, 1}, T(1));
    const auto wh_all = ad::matmul(h, layer.weight);
    ad::Tensor<T> combined;
    std::vector<ad::Tensor<T>> head_out;
    for (std::size_t k = 0; k < layer.heads; ++k) {
        const auto wh = ad::slice_cols(wh_all, k * layer.head_dim, (k + 1) * layer.head_dim);
        const auto src = ad::reshape(ad::matmul(wh, layer.a_src[k]), {1, m});
        const auto dst = ad::matmul(wh, layer.a_dst[k]);
        // e[i][p] = LeakyReLU(a_dst . Wh_i + a_src . Wh_p)
        auto e = ad::add(ad::matmul(dst, ones_row), ad::matmul(ones_col, src));
        e = ad::add(ad::leaky_relu(e, slope), mask);
        const auto att = ad::softmax_rows(e);
        attention_out.push_back(att.to_vector());
        head_out.push_back(ad::matmul(ad::dropout(att, dropout, training, rng), wh));
    }
    if (layer.concat) {
        return ad::concat_cols<T>(head_out);
    }
    combined = head_out[0];
    for (std::size_t k = 1; k < head_out.size(); ++k) {
        combined = ad::add(combined, head_out[k]);
    }
    return ad::scale(combined, T(1) / static_cast<T>(layer.heads));
}

} // namespace

template <std::floating_point T>
Gat<T> make_gat(ad::ParameterStore<T>& store, const std::string& name, const InteractionConfig& config,
                Rng& rng) {
    if (config.heads == 0 || config.feature_dim % config.heads != 0) {
        throw ContractViolation("GAT feature dimension must split evenly over the heads");
    }
    Gat<T> gat;
    gat.layer1 = make_layer(store, name + ".layer1", config.feature_dim, config.heads,
                            config.feature_dim / config.heads, true, rng);
    gat.layer2 = make_layer(store, name + ".layer2", config.feature_dim, config.heads,
                            config.feature_dim, false, rng);
    gat.dropout = static_cast<T>(config.attention_dropout);
    gat.slope = static_cast<T>(config.leaky_slope);
    return gat;
}

template <std::floating_point T>
GatOutput<T> gat_aggregate(const Gat<T>& gat, const ad::Tensor<T>& features, const SceneGraph& graph,
                           bool training, Rng& rng) {
    const std::size_t m = graph.node_count;
    if (ad::rows_of(features) != m) {
        throw ContractViolation("gat_aggregate: one feature row per graph node required");
    }
    if (ad::cols_of(features) != gat.layer1.weight.dim(0)) {
        throw ContractViolation("gat_aggregate: feature width " + std::to_string(ad::cols_of(features)) +
                                " does not match the network");
    }
    // Additive mask: 0 on the neighborhood and self-loop, a large negative
    // number elsewhere so softmax assigns exactly zero weight.
    const T blocked = -std::numeric_limits<T>::max() / T(4);
    std::vector<T> mask(m * m, blocked);
    for (std::size_t i = 0; i < m; ++i) {
        mask[i * m + i] = T(0);
    }
    for (const auto& [i, p] : graph.edges) {
        mask[i * m + p] = T(0);
        mask[p * m + i] = T(0);
    }
    const ad::Tensor<T> mask_t({m, m}, std::move(mask));
    GatOutput<T> out;
    out.attention.resize(2);
    const auto h1 = ad::elu(attend(gat.layer1, features, mask_t, gat.slope, gat.dropout, training, rng,
                                   out.attention[0]));
    out.features = attend(gat.layer2, h1, mask_t, gat.slope, gat.dropout, training, rng, out.attention[1]);
    return out;
}

template <std::floating_point T>
InteractionDecoder<T> make_interaction_decoder(ad::ParameterStore<T>& store, const std::string& name,
                                               const InteractionConfig& config, Rng& rng) {
    InteractionDecoder<T> d;
    d.hidden = ad::make_linear(store, name + ".hidden", config.feature_dim, config.decoder_hidden, rng);
    d.output = ad::make_linear(store, name + ".output", config.decoder_hidden, 7, rng, ad::Init::Zero);
    d.max_translation = static_cast<T>(config.max_translation);
    return d;
}

template <std::floating_point T>
InstanceResiduals<T> decode_interaction(const InteractionDecoder<T>& decoder,
                                        const ad::Tensor<T>& aggregated) {
    const auto out = decoder.output(ad::relu(decoder.hidden(aggregated)));
    return {ad::scale(ad::tanh(ad::slice_cols(out, 0, 3)), decoder.max_translation),
            ad::slice_cols(out, 3, 6), ad::slice_cols(out, 6, 7)};
}

template <std::floating_point T>
std::vector<gs::GaussianSet<T>> apply_stage2_updates(std::span<const gs::GaussianSet<T>> stage1,
                                                     const InstanceResiduals<T>& residuals,
                                                     std::span<const std::size_t> active) {
    std::vector<gs::GaussianSet<T>> out(stage1.begin(), stage1.end());
    if (active.empty()) {
        return out;
    }
    if (!residuals.delta_mu.defined() || ad::rows_of(residuals.delta_mu) != active.size()) {
        throw ContractViolation("apply_stage2_updates: one residual row per active instance required");
    }
    for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t i = active[k];
        if (i >= out.size()) {
            throw ContractViolation("apply_stage2_updates: active index out of range");
        }
        auto& set = out[i];
        set.centers = ad::add_row(set.centers, ad::slice_rows(residuals.delta_mu, k, k + 1));
        const auto dc = ad::slice_rows(residuals.delta_c0, k, k + 1);
        const std::size_t width = ad::cols_of(set.sh);
        if (width == 3) {
            set.sh = ad::add_row(set.sh, dc);
        } else {
            const std::vector<ad::Tensor<T>> parts{ad::add_row(ad::slice_cols(set.sh, 0, 3), dc),
                                                   ad::slice_cols(set.sh, 3, width)};
            set.sh = ad::concat_cols<T>(parts);
        }
        set.opacity_logit =
            ad::add_row(set.opacity_logit, ad::slice_rows(residuals.delta_alpha, k, k + 1));
    }
    return out;
}

#define MMGS_INSTANTIATE_INTERACTION(T)                                                            \
    template Aabb instance_aabb(const ad::Tensor<T>&);                                             \
    template Gat<T> make_gat(ad::ParameterStore<T>&, const std::string&, const InteractionConfig&, \
                             Rng&);                                                                \
    template GatOutput<T> gat_aggregate(const Gat<T>&, const ad::Tensor<T>&, const SceneGraph&,    \
                                        bool, Rng&);                                               \
    template InteractionDecoder<T> make_interaction_decoder(                                       \
        ad::ParameterStore<T>&, const std::string&, const InteractionConfig&, Rng&);               \
    template InstanceResiduals<T> decode_interaction(const InteractionDecoder<T>&,                 \
                                                     const ad::Tensor<T>&);                        \
    template std::vector<gs::GaussianSet<T>> apply_stage2_updates(                                 \
        std::span<const gs::GaussianSet<T>>, const InstanceResiduals<T>&,                          \
        std::span<const std::size_t>);

MMGS_INSTANTIATE_INTERACTION(float)
MMGS_INSTANTIATE_INTERACTION(double)

} // namespace mmgs::interaction
