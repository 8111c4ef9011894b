#include "mmgs/deform/deformation.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/gaussians/operations.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numbers>

namespace mmgs::deform {

const char* kind_name(InstanceKind kind) {
    return kind == InstanceKind::Human ? "human" : "object";
}

void require_rotation(const Eigen::Matrix3d& r, const std::string& what) {
    const double ortho = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-6) || !(std::abs(r.determinant() - 1.0) <= 1e-6)) {
        throw ContractViolation(what + " is not a proper rotation (orthonormality error " +
                                std::to_string(ortho) + ", det " +
                                std::to_string(r.determinant()) + ")");
    }
}

void SkinnedTemplate::validate() const {
    if (vertex_count == 0) {
        throw ContractViolation("template has no vertices");
    }
    if (vertices.size() != vertex_count * 3) {
        throw ContractViolation("template vertex array must be V x 3");
    }
    if (!offsets.empty() && offsets.size() != vertex_count * 3) {
        throw ContractViolation("template offsets must be V x 3");
    }
    if (kind == InstanceKind::Object) {
        if (!weights.empty()) {
            throw ContractViolation("object templates carry no skinning weights");
        }
        return;
    }
    if (joint_count == 0 || weights.size() != vertex_count * joint_count) {
        throw ContractViolation("human template needs a V x K weight matrix with K >= 1");
    }
    for (std::size_t v = 0; v < vertex_count; ++v) {
        double total = 0.0;
        for (std::size_t k = 0; k < joint_count; ++k) {
            const double w = weights[v * joint_count + k];
            if (!(w >= 0.0)) {
                throw ContractViolation("negative skinning weight at vertex " + std::to_string(v));
            }
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw ContractViolation("skinning weights of vertex " + std::to_string(v) +
                                    " sum to " + std::to_string(total));
        }
    }
}

JointTransforms JointTransforms::identity(std::size_t joints) {
    JointTransforms out;
    out.rotations.assign(joints, Eigen::Matrix3d::Identity());
    out.translations.assign(joints, Eigen::Vector3d::Zero());
    return out;
}

void JointTransforms::validate() const {
    if (rotations.size() != translations.size()) {
        throw ContractViolation("joint rotation and translation counts differ");
    }
    for (std::size_t k = 0; k < rotations.size(); ++k) {
        require_rotation(rotations[k], "joint " + std::to_string(k) + " rotation");
    }
}

void RigidPose::validate() const { require_rotation(rotation, "object pose rotation"); }

template <std::floating_point T>
ad::Tensor<T> positional_encoding(std::span<const double> positions) {
    const std::size_t v = positions.size() / 3;
    constexpr std::size_t kOctaves = 4;
    constexpr std::size_t kDim = 3 + 3 * 2 * kOctaves;
    std::vector<T> out(v * kDim);
    for (std::size_t i = 0; i < v; ++i) {
        T* row = &out[i * kDim];
        for (std::size_t c = 0; c < 3; ++c) {
            const double x = positions[i * 3 + c];
            row[c] = static_cast<T>(x);
            for (std::size_t k = 0; k < kOctaves; ++k) {
                const double arg = std::ldexp(std::numbers::pi, static_cast<int>(k)) * x;
                row[3 + k * 6 + c] = static_cast<T>(std::sin(arg));
                row[3 + k * 6 + 3 + c] = static_cast<T>(std::cos(arg));
            }
        }
    }
    return ad::Tensor<T>({v, kDim}, std::move(out));
}

template <std::floating_point T>
ad::Tensor<T> LbsNetwork<T>::operator()(const ad::Tensor<T>& encoded) const {
    const auto h1 = ad::relu(hidden1(encoded));
    const auto h2 = ad::relu(hidden2(h1));
    return ad::scale(ad::tanh(output(h2)), T(5));
}

template <std::floating_point T>
LbsNetwork<T> make_lbs_network(ad::ParameterStore<T>& store, const std::string& name,
                               std::size_t joints, Rng& rng) {
    LbsNetwork<T> net;
    net.hidden1 = ad::make_linear(store, name + ".hidden1", 27, 64, rng);
    net.hidden2 = ad::make_linear(store, name + ".hidden2", 64, 64, rng);
    net.output = ad::make_linear(store, name + ".output", 64, joints, rng, ad::Init::Zero);
    return net;
}

template <std::floating_point T>
ad::Tensor<T> predict_modulation(const LbsNetwork<T>& network, const SkinnedTemplate& tmpl) {
    return network(positional_encoding<T>(tmpl.vertices));
}

template <std::floating_point T>
ad::Tensor<T> modulate_weights(const ad::Tensor<T>& base_weights, const ad::Tensor<T>& modulation) {
    return ad::softmax_rows(ad::add(base_weights, modulation));
}

namespace {

void require_weights_shape(std::size_t rows, std::size_t cols, std::size_t v, std::size_t k) {
    if (rows != v || cols != k) {
        throw ContractViolation("blend weights are " + std::to_string(rows) + " x " +
                                std::to_string(cols) + ", expected " + std::to_string(v) + " x " +
                                std::to_string(k));
    }
}

} // namespace

template <std::floating_point T>
ad::Tensor<T> lbs_pose_centers(const SkinnedTemplate& tmpl, const JointTransforms& joints,
                               const ad::Tensor<T>& weights) {
    const std::size_t v = tmpl.vertex_count, k = joints.size();
    require_weights_shape(ad::rows_of(weights), ad::cols_of(weights), v, k);
    // Per-vertex, per-joint displacement (R_k - I) muc + t_k.
    auto disp = std::make_shared<std::vector<double>>(v * k * 3);
    std::vector<T> out(v * 3);
    const auto w = weights.data();
    for (std::size_t i = 0; i < v; ++i) {
        const Eigen::Vector3d muc(tmpl.vertices[i * 3], tmpl.vertices[i * 3 + 1],
                                  tmpl.vertices[i * 3 + 2]);
        Eigen::Vector3d base = muc;
        if (!tmpl.offsets.empty()) {
            base += Eigen::Vector3d(tmpl.offsets[i * 3], tmpl.offsets[i * 3 + 1], tmpl.offsets[i * 3 + 2]);
        }
        Eigen::Vector3d moved = Eigen::Vector3d::Zero();
        for (std::size_t j = 0; j < k; ++j) {
            const Eigen::Vector3d d = (joints.rotations[j] * muc - muc) + joints.translations[j];
            for (int c = 0; c < 3; ++c) {
                (*disp)[(i * k + j) * 3 + c] = d[c];
            }
            moved += static_cast<double>(w[i * k + j]) * d;
        }
        for (int c = 0; c < 3; ++c) {
            out[i * 3 + c] = static_cast<T>(base[c] + moved[c]);
        }
    }
    return ad::make_result<T>({v, 3}, std::move(out), {weights}, [disp, v, k](ad::detail::Node<T>& node) {
        if (T* g = ad::parent_grad(node, 0)) {
            for (std::size_t i = 0; i < v; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double* d = &(*disp)[(i * k + j) * 3];
                    g[i * k + j] += static_cast<T>(node.grad[i * 3] * d[0] + node.grad[i * 3 + 1] * d[1] +
                                                   node.grad[i * 3 + 2] * d[2]);
                }
            }
        }
    });
}

template <std::floating_point T>
ad::Tensor<T> blend_rotations(const JointTransforms& joints, const ad::Tensor<T>& weights) {
    const std::size_t v = ad::rows_of(weights), k = joints.size();
    require_weights_shape(v, ad::cols_of(weights), v, k);
    std::vector<T> out(v * 9, T(0));
    const auto w = weights.data();
    for (std::size_t i = 0; i < v; ++i) {
        Eigen::Matrix3d blend = Eigen::Matrix3d::Zero();
        for (std::size_t j = 0; j < k; ++j) {
            blend += static_cast<double>(w[i * k + j]) * joints.rotations[j];
        }
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                out[i * 9 + r * 3 + c] = static_cast<T>(blend(r, c));
            }
        }
    }
    auto rotations = std::make_shared<std::vector<Eigen::Matrix3d>>(joints.rotations);
    return ad::make_result<T>({v, 9}, std::move(out), {weights}, [rotations, v, k](ad::detail::Node<T>& node) {
        if (T* g = ad::parent_grad(node, 0)) {
            for (std::size_t i = 0; i < v; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const Eigen::Matrix3d& r = (*rotations)[j];
                    double acc = 0.0;
                    for (int e = 0; e < 9; ++e) {
                        acc += node.grad[i * 9 + e] * r(e / 3, e % 3);
                    }
                    g[i * k + j] += static_cast<T>(acc);
                }
            }
        }
    });
}

BlendedCovariance lbs_pose_covariance(const Eigen::Matrix3d& canonical_sigma,
                                      const JointTransforms& joints,
                                      std::span<const double> weights) {
    if (weights.size() != joints.size()) {
        throw ContractViolation("covariance blend needs one weight per joint");
    }
    BlendedCovariance out;
    out.blend.setZero();
    for (std::size_t k = 0; k < joints.size(); ++k) {
        out.blend += weights[k] * joints.rotations[k];
    }
    out.sigma = out.blend * canonical_sigma * out.blend.transpose();
    return out;
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& blend) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(blend, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

RigidPosed pose_rigid_object(std::span<const double> centers, const RigidPose& pose,
                             std::span<const double> rotations) {
    pose.validate();
    const std::size_t v = centers.size() / 3;
    if (!rotations.empty() && rotations.size() != v * 4) {
        throw ContractViolation("rigid posing: one quaternion per vertex required");
    }
    RigidPosed out;
    out.centers.resize(v * 3);
    for (std::size_t i = 0; i < v; ++i) {
        const Eigen::Vector3d p =
            pose.rotation * Eigen::Vector3d(centers[i * 3], centers[i * 3 + 1], centers[i * 3 + 2]) +
            pose.translation;
        for (int c = 0; c < 3; ++c) {
            out.centers[i * 3 + c] = p[c];
        }
    }
    if (!rotations.empty()) {
        const Eigen::Vector4d q_pose = gs::quaternion_from_rotation(pose.rotation);
        out.rotations.resize(v * 4);
        for (std::size_t i = 0; i < v; ++i) {
            const Eigen::Vector4d q = gs::quaternion_multiply(
                q_pose, Eigen::Vector4d(rotations[i * 4], rotations[i * 4 + 1], rotations[i * 4 + 2],
                                        rotations[i * 4 + 3]));
            for (int c = 0; c < 4; ++c) {
                out.rotations[i * 4 + c] = q[c];
            }
        }
    }
    return out;
}

template <std::floating_point T>
ad::Tensor<T> compose_rotation(const ad::Tensor<T>& quaternions, const Eigen::Matrix3d& rotation) {
    const Eigen::Vector4d a = gs::quaternion_from_rotation(rotation);
    // Left multiplication a * q = L q; rows of q map through L^T.
    Eigen::Matrix4d left;
    left << a[0], -a[1], -a[2], -a[3],
            a[1], a[0], -a[3], a[2],
            a[2], a[3], a[0], -a[1],
            a[3], -a[2], a[1], a[0];
    std::vector<T> lt(16);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            lt[r * 4 + c] = static_cast<T>(left(c, r));
        }
    }
    return ad::matmul(quaternions, ad::Tensor<T>({4, 4}, std::move(lt)));
}

template <std::floating_point T>
ad::Tensor<T> rigid_centers(std::span<const double> centers, const RigidPose& pose) {
    const auto posed = pose_rigid_object(centers, pose);
    std::vector<T> out(posed.centers.begin(), posed.centers.end());
    return ad::Tensor<T>({centers.size() / 3, 3}, std::move(out));
}

namespace {

template <std::floating_point T>
void check_canonical(const SkinnedTemplate& tmpl, const gs::GaussianSet<T>& canonical) {
    if (canonical.sh.dim(0) != tmpl.vertex_count) {
        throw ContractViolation("canonical attributes hold " + std::to_string(canonical.sh.dim(0)) +
                                " Gaussians for a template of " + std::to_string(tmpl.vertex_count) +
                                " vertices");
    }
}

} // namespace

template <std::floating_point T>
gs::GaussianSet<T> pose_human(const SkinnedTemplate& tmpl, const gs::GaussianSet<T>& canonical,
                              const JointTransforms& joints, const ad::Tensor<T>& weights) {
    check_canonical(tmpl, canonical);
    gs::GaussianSet<T> out = canonical;
    out.centers = lbs_pose_centers(tmpl, joints, weights);
    out.deformation = blend_rotations(joints, weights);
    return out;
}

template <std::floating_point T>
gs::GaussianSet<T> pose_object(const SkinnedTemplate& tmpl, const gs::GaussianSet<T>& canonical,
                               const RigidPose& pose) {
    check_canonical(tmpl, canonical);
    gs::GaussianSet<T> out = canonical;
    out.centers = rigid_centers<T>(tmpl.vertices, pose);
    std::vector<T> r(tmpl.vertex_count * 9);
    for (std::size_t v = 0; v < tmpl.vertex_count; ++v) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                r[v * 9 + i * 3 + j] = static_cast<T>(pose.rotation(i, j));
            }
        }
    }
    out.deformation = ad::Tensor<T>({tmpl.vertex_count, 9}, std::move(r));
    return out;
}

double mean_nearest_neighbor_distance(std::span<const double> centers) {
    const std::size_t v = centers.size() / 3;
    if (v < 2) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < v; ++j) {
            if (i == j) {
                continue;
            }
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = centers[i * 3 + c] - centers[j * 3 + c];
                d2 += d * d;
            }
            best = std::min(best, d2);
        }
        total += std::sqrt(best);
    }
    return total / static_cast<double>(v);
}

template <std::floating_point T>
gs::GaussianSet<T> initialize_gaussian_attributes(std::span<const double> centers, int sh_degree,
                                                  double single_vertex_scale) {
    const std::size_t v = centers.size() / 3;
    if (v == 0) {
        throw ContractViolation("cannot initialize Gaussians for an empty instance");
    }
    double scale = v < 2 ? single_vertex_scale : 0.5 * mean_nearest_neighbor_distance(centers);
    if (!(scale > 0.0)) {
        scale = single_vertex_scale;
    }
    std::vector<T> rotation(v * 4, T(0));
    for (std::size_t i = 0; i < v; ++i) {
        rotation[i * 4] = T(1);
    }
    return gs::make_gaussian_set<T>(
        sh_degree, std::vector<T>(centers.begin(), centers.end()),
        std::vector<T>(v * 3 * gs::sh_basis_count(sh_degree), T(0)), std::vector<T>(v, T(0)),
        std::move(rotation), std::vector<T>(v * 3, static_cast<T>(std::log(scale))));
}

#define MMGS_INSTANTIATE_DEFORM(T)                                                                 \
    template ad::Tensor<T> positional_encoding<T>(std::span<const double>);                        \
    template struct LbsNetwork<T>;                                                                 \
    template LbsNetwork<T> make_lbs_network(ad::ParameterStore<T>&, const std::string&,            \
                                            std::size_t, Rng&);                                    \
    template ad::Tensor<T> predict_modulation(const LbsNetwork<T>&, const SkinnedTemplate&);       \
    template ad::Tensor<T> modulate_weights(const ad::Tensor<T>&, const ad::Tensor<T>&);           \
    template ad::Tensor<T> lbs_pose_centers(const SkinnedTemplate&, const JointTransforms&,        \
                                            const ad::Tensor<T>&);                                 \
    template ad::Tensor<T> blend_rotations(const JointTransforms&, const ad::Tensor<T>&);          \
    template ad::Tensor<T> compose_rotation(const ad::Tensor<T>&, const Eigen::Matrix3d&);         \
    template ad::Tensor<T> rigid_centers<T>(std::span<const double>, const RigidPose&);            \
    template gs::GaussianSet<T> initialize_gaussian_attributes<T>(std::span<const double>, int,    \
                                                                  double);                         \
    template gs::GaussianSet<T> pose_human(const SkinnedTemplate&, const gs::GaussianSet<T>&,       \
                                           const JointTransforms&, const ad::Tensor<T>&);          \
    template gs::GaussianSet<T> pose_object(const SkinnedTemplate&, const gs::GaussianSet<T>&,      \
                                            const RigidPose&);

MMGS_INSTANTIATE_DEFORM(float)
MMGS_INSTANTIATE_DEFORM(double)

} // namespace mmgs::deform
