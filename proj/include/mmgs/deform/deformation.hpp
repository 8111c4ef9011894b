#pragma once

#include "mmgs/ad/nn.hpp"
#include "mmgs/ad/tensor.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmgs::deform {

enum class InstanceKind { Human, Object };

const char* kind_name(InstanceKind kind);

/// Canonical geometry of one instance. Row-major arrays.
struct SkinnedTemplate {
    InstanceKind kind = InstanceKind::Object;
    std::size_t vertex_count = 0;
    std::size_t joint_count = 0;  // 0 for objects
    std::vector<double> vertices; // [V x 3]
    std::vector<double> weights;  // [V x K], humans only
    std::vector<double> offsets;  // [V x 3], all zero unless provided

    /// Throws ContractViolation naming the offending vertex.
    void validate() const;
};

struct JointTransforms {
    std::vector<Eigen::Matrix3d> rotations;
    std::vector<Eigen::Vector3d> translations;

    std::size_t size() const { return rotations.size(); }
    static JointTransforms identity(std::size_t joints);
    void validate() const;
};

struct RigidPose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    void validate() const;
};

/// Throws ContractViolation unless `r` is orthonormal with determinant +1
/// within 1e-6. `what` prefixes the message.
void require_rotation(const Eigen::Matrix3d& r, const std::string& what);

/// Frequency encoding of canonical positions: x, sin(2^k pi x), cos(2^k pi x)
/// for k < 4, giving [V x 27]. Not differentiable (inputs are constants).
template <std::floating_point T>
ad::Tensor<T> positional_encoding(std::span<const double> positions);

/// Per-vertex joint-weight modulation network. Output 5 tanh(.) of a
/// 27 -> 64 -> 64 -> K MLP whose last layer starts at zero.
template <std::floating_point T>
struct LbsNetwork {
    ad::Linear<T> hidden1, hidden2, output;

    ad::Tensor<T> operator()(const ad::Tensor<T>& encoded) const;
};

template <std::floating_point T>
LbsNetwork<T> make_lbs_network(ad::ParameterStore<T>& store, const std::string& name,
                               std::size_t joints, Rng& rng);

/// Modulation logits m [V x K] for the template's canonical vertices.
template <std::floating_point T>
ad::Tensor<T> predict_modulation(const LbsNetwork<T>& network, const SkinnedTemplate& tmpl);

/// Row-wise softmax(w_smpl + m).
template <std::floating_point T>
ad::Tensor<T> modulate_weights(const ad::Tensor<T>& base_weights, const ad::Tensor<T>& modulation);

/// mu0 = sum_k w_k (R_k muc + t_k) + b, differentiable w.r.t. w [V x K].
/// Evaluated as muc + b + sum_k w_k ((R_k - I) muc + t_k), which is the same
/// quantity for unit-sum rows and reproduces muc exactly under identity joints.
template <std::floating_point T>
ad::Tensor<T> lbs_pose_centers(const SkinnedTemplate& tmpl, const JointTransforms& joints,
                               const ad::Tensor<T>& weights);

/// Blended matrices r0 = sum_k w_k R_k as [V x 9] row-major, differentiable
/// w.r.t. w.
template <std::floating_point T>
ad::Tensor<T> blend_rotations(const JointTransforms& joints, const ad::Tensor<T>& weights);

struct BlendedCovariance {
    Eigen::Matrix3d sigma; // r0 sigma_c r0^T
    Eigen::Matrix3d blend; // r0, not orthonormal in general
};

/// Single-vertex form of the covariance blend.
BlendedCovariance lbs_pose_covariance(const Eigen::Matrix3d& canonical_sigma,
                                      const JointTransforms& joints,
                                      std::span<const double> weights);

/// Nearest rotation to a blended matrix (polar factor), for reporting.
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& blend);

struct RigidPosed {
    std::vector<double> centers;   // [V x 3]
    std::vector<double> rotations; // [V x 4], input quaternions composed with the pose
};

/// R_obj v + T_obj per vertex; quaternions (optional, [V x 4]) are composed
/// with R_obj. Throws if the pose rotation is not proper.
RigidPosed pose_rigid_object(std::span<const double> centers, const RigidPose& pose,
                             std::span<const double> rotations = {});

/// [V x 4] quaternion rows left-multiplied by the pose rotation, differentiable.
template <std::floating_point T>
ad::Tensor<T> compose_rotation(const ad::Tensor<T>& quaternions, const Eigen::Matrix3d& rotation);

/// Posed centers R v + t as a constant tensor.
template <std::floating_point T>
ad::Tensor<T> rigid_centers(std::span<const double> centers, const RigidPose& pose);

/// Stage-0 state of a human: LBS centers and the blended joint rotations as the
/// per-Gaussian deformation; appearance, rotation and scale come from
/// `canonical` unchanged.
template <std::floating_point T>
gs::GaussianSet<T> pose_human(const SkinnedTemplate& tmpl, const gs::GaussianSet<T>& canonical,
                              const JointTransforms& joints, const ad::Tensor<T>& weights);

/// Stage-0 state of an object: rigidly posed centers, with the pose rotation
/// as a constant per-Gaussian deformation.
template <std::floating_point T>
gs::GaussianSet<T> pose_object(const SkinnedTemplate& tmpl, const gs::GaussianSet<T>& canonical,
                               const RigidPose& pose);

inline constexpr double kDefaultSingleVertexScale = 0.01;

/// Generic starting attributes: zero SH, opacity 0.5, identity rotation and
/// an isotropic scale of half the mean nearest-neighbour distance. The
/// returned tensors are plain leaves (requires_grad off).
template <std::floating_point T>
gs::GaussianSet<T> initialize_gaussian_attributes(std::span<const double> centers, int sh_degree,
                                                  double single_vertex_scale = kDefaultSingleVertexScale);

/// Mean nearest-neighbour distance of a point set (0 for fewer than 2 points).
double mean_nearest_neighbor_distance(std::span<const double> centers);

} // namespace mmgs::deform
