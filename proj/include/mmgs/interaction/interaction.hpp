#pragma once

#include "mmgs/ad/nn.hpp"
#include "mmgs/ad/tensor.hpp"
#include "mmgs/common/rng.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mmgs::interaction {

/// Closed axis-aligned box.
struct Aabb {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();

    /// Touching boxes intersect.
    bool intersects(const Aabb& other) const;
};

/// Componentwise bounds of a [G x 3] center array; throws when G = 0.
template <std::floating_point T>
Aabb instance_aabb(const ad::Tensor<T>& centers);

struct SceneGraph {
    std::size_t node_count = 0;
    /// Undirected edges (i, p) with i < p, sorted lexicographically.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    /// Neighbor count per node, self-loops excluded.
    std::vector<std::size_t> degree;

    std::vector<std::vector<std::size_t>> neighbors() const;
};

/// Sort-and-sweep along x followed by the full interval test.
SceneGraph build_scene_graph(std::span<const Aabb> boxes);

/// O(M^2) pairwise reference.
SceneGraph build_scene_graph_bruteforce(std::span<const Aabb> boxes);

/// Nodes with degree >= tau, ascending.
std::vector<std::size_t> active_instances(const SceneGraph& graph, std::size_t tau);

/// {"frame": n, "nodes": [...], "edges": [[i, p], ...], "active": [...]} with
/// node indices mapped through `instance_ids`.
std::string scene_graph_json(const SceneGraph& graph, int frame, std::span<const int> instance_ids,
                             std::span<const std::size_t> active);

struct InteractionConfig {
    std::size_t feature_dim = 64;
    std::size_t heads = 4;
    double attention_dropout = 0.1;
    double leaky_slope = 0.2;
    std::size_t tau_deg = 1;
    std::size_t decoder_hidden = 64;
    double max_translation = 0.05;
};

/// One multi-head attention layer. Head k owns columns [k d, (k+1) d) of W.
template <std::floating_point T>
struct GatLayer {
    std::size_t heads = 0;
    std::size_t head_dim = 0;
    bool concat = true;
    ad::Tensor<T> weight;              // [in x heads*d]
    std::vector<ad::Tensor<T>> a_src;  // per head [d x 1]
    std::vector<ad::Tensor<T>> a_dst;  // per head [d x 1]
};

template <std::floating_point T>
struct Gat {
    GatLayer<T> layer1; // heads x (dim / heads), concatenated, ELU
    GatLayer<T> layer2; // heads x dim, averaged
    T dropout = T(0.1);
    T slope = T(0.2);
};

template <std::floating_point T>
Gat<T> make_gat(ad::ParameterStore<T>& store, const std::string& name, const InteractionConfig& config,
                Rng& rng);

template <std::floating_point T>
struct GatOutput {
    ad::Tensor<T> features; // [M x dim]
    /// attention[layer][head] is a dense [M x M] row-stochastic matrix
    /// (before dropout), zero outside each node's neighborhood and self-loop.
    std::vector<std::vector<std::vector<T>>> attention;
};

/// Two attention layers over the scene graph plus self-loops. Dropout on the
/// attention coefficients only when `training`.
template <std::floating_point T>
GatOutput<T> gat_aggregate(const Gat<T>& gat, const ad::Tensor<T>& features, const SceneGraph& graph,
                           bool training, Rng& rng);

/// Psi_I: dim -> hidden (ReLU) -> 7, last layer zero-initialized.
template <std::floating_point T>
struct InteractionDecoder {
    ad::Linear<T> hidden;
    ad::Linear<T> output;
    T max_translation = T(0.05);
};

template <std::floating_point T>
InteractionDecoder<T> make_interaction_decoder(ad::ParameterStore<T>& store, const std::string& name,
                                               const InteractionConfig& config, Rng& rng);

template <std::floating_point T>
struct InstanceResiduals {
    ad::Tensor<T> delta_mu;    // [A x 3], |x| <= max_translation
    ad::Tensor<T> delta_c0;    // [A x 3]
    ad::Tensor<T> delta_alpha; // [A x 1]
};

/// Rows of `aggregated` are the active instances' features.
template <std::floating_point T>
InstanceResiduals<T> decode_interaction(const InteractionDecoder<T>& decoder,
                                        const ad::Tensor<T>& aggregated);

/// Stage-2 update. `stage1[i]` carries centers mu^0 (stage 1 leaves them
/// untouched); residual row k belongs to instance active[k]. With no active
/// instances the residual tensors may be undefined.
template <std::floating_point T>
std::vector<gs::GaussianSet<T>> apply_stage2_updates(std::span<const gs::GaussianSet<T>> stage1,
                                                     const InstanceResiduals<T>& residuals,
                                                     std::span<const std::size_t> active);

} // namespace mmgs::interaction
