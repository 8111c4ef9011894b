#include "mmgs/ad/grad_check.hpp"
#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/deform/deformation.hpp"
#include "mmgs/gaussians/operations.hpp"
#include "support.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace mmgs::deform {
namespace {

Eigen::Matrix3d rot_z(double angle) {
    return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

Eigen::Matrix3d random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized().toRotationMatrix();
}

SkinnedTemplate random_human(Rng& rng, std::size_t v, std::size_t k) {
    SkinnedTemplate t;
    t.kind = InstanceKind::Human;
    t.vertex_count = v;
    t.joint_count = k;
    for (std::size_t i = 0; i < v; ++i) {
        double total = 0.0;
        std::vector<double> row(k);
        for (auto& w : row) {
            w = rng.uniform(0.01, 1.0);
            total += w;
        }
        for (auto w : row) {
            t.weights.push_back(w / total);
        }
        for (int c = 0; c < 3; ++c) {
            t.vertices.push_back(rng.uniform(-0.5, 0.5));
        }
    }
    return t;
}

TEST(Modulation, FreshNetworkOutputsExactZero) {
    ad::ParameterStore<double> store;
    Rng rng(1);
    const auto net = make_lbs_network(store, "lbs", 4, rng);
    const auto tmpl = random_human(rng, 30, 4);
    const auto m = predict_modulation(net, tmpl);
    ASSERT_EQ(m.shape(), (ad::Shape{30, 4}));
    for (double x : m.data()) {
        EXPECT_EQ(x, 0.0);
    }
}

TEST(Modulation, BoundedByFiveAndPointwise) {
    ad::ParameterStore<double> store;
    Rng rng(2);
    const auto net = make_lbs_network(store, "lbs", 3, rng);
    for (auto& w : net.output.weight.node()->value) {
        w = rng.uniform(-50, 50);
    }
    auto tmpl = random_human(rng, 20, 3);
    for (int c = 0; c < 3; ++c) {
        tmpl.vertices[3 + c] = tmpl.vertices[c]; // rows 0 and 1 identical
    }
    const auto m = predict_modulation(net, tmpl);
    for (double x : m.data()) {
        EXPECT_LE(std::abs(x), 5.0);
        EXPECT_TRUE(std::isfinite(x));
    }
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(m.at(k), m.at(3 + k));
    }
}

TEST(Modulation, SoftmaxExamples) {
    const ad::Tensor<double> base({2, 2}, {1, 0, 1, 0});
    const ad::Tensor<double> m({2, 2}, {0, 0, -1, 0});
    const auto w = modulate_weights(base, m);
    EXPECT_NEAR(w.at(0), 0.7310585786300049, 1e-12);
    EXPECT_NEAR(w.at(1), 0.2689414213699951, 1e-12);
    EXPECT_DOUBLE_EQ(w.at(2), 0.5);
    EXPECT_DOUBLE_EQ(w.at(3), 0.5);
}

TEST(Modulation, RowsSumToOneAndShiftInvariant) {
    Rng rng(3);
    std::vector<double> a(40), b(40), shifted(40);
    for (std::size_t i = 0; i < 40; ++i) {
        a[i] = rng.uniform(-20, 20);
        b[i] = rng.uniform(-20, 20);
    }
    for (std::size_t r = 0; r < 10; ++r) {
        const double c = rng.uniform(-3, 3);
        for (std::size_t k = 0; k < 4; ++k) {
            shifted[r * 4 + k] = b[r * 4 + k] + c;
        }
    }
    const auto w = modulate_weights(ad::Tensor<double>({10, 4}, a), ad::Tensor<double>({10, 4}, b));
    const auto ws = modulate_weights(ad::Tensor<double>({10, 4}, a), ad::Tensor<double>({10, 4}, shifted));
    for (std::size_t r = 0; r < 10; ++r) {
        double total = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            total += w.at(r * 4 + k);
            EXPECT_NEAR(w.at(r * 4 + k), ws.at(r * 4 + k), 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(LbsCenters, IdentityJointsAreBitExact) {
    Rng rng(4);
    const auto tmpl = random_human(rng, 50, 4);
    const ad::Tensor<float> zero = ad::Tensor<float>::zeros({50, 4});
    const ad::Tensor<float> base({50, 4}, std::vector<float>(tmpl.weights.begin(), tmpl.weights.end()));
    const auto w = modulate_weights(base, zero);
    const auto mu = lbs_pose_centers(tmpl, JointTransforms::identity(4), w);
    for (std::size_t i = 0; i < 150; ++i) {
        EXPECT_EQ(mu.at(i), static_cast<float>(tmpl.vertices[i]));
    }
}

TEST(LbsCenters, SingleJointTranslation) {
    Rng rng(5);
    auto tmpl = random_human(rng, 5, 1);
    auto joints = JointTransforms::identity(1);
    joints.translations[0] = {0, 0, 1};
    const auto mu = lbs_pose_centers(tmpl, joints, ad::Tensor<double>::full({5, 1}, 1.0));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(mu.at(i * 3 + 2), tmpl.vertices[i * 3 + 2] + 1.0);
        EXPECT_DOUBLE_EQ(mu.at(i * 3), tmpl.vertices[i * 3]);
    }
}

TEST(LbsCenters, TwoJointHalfWeights) {
    SkinnedTemplate tmpl;
    tmpl.kind = InstanceKind::Human;
    tmpl.vertex_count = 1;
    tmpl.joint_count = 2;
    tmpl.vertices = {0, 0, 0};
    tmpl.weights = {0.5, 0.5};
    auto joints = JointTransforms::identity(2);
    joints.translations = {{1, 0, 0}, {0, 1, 0}};
    const auto mu = lbs_pose_centers(tmpl, joints, ad::Tensor<double>({1, 2}, {0.5, 0.5}));
    EXPECT_EQ(mu.to_vector(), (std::vector<double>{0.5, 0.5, 0.0}));
}

TEST(LbsCenters, OffsetsAreAdded) {
    SkinnedTemplate tmpl;
    tmpl.kind = InstanceKind::Human;
    tmpl.vertex_count = 1;
    tmpl.joint_count = 1;
    tmpl.vertices = {1, 2, 3};
    tmpl.weights = {1};
    tmpl.offsets = {0.5, 0, -1};
    const auto mu = lbs_pose_centers(tmpl, JointTransforms::identity(1), ad::Tensor<double>({1, 1}, {1.0}));
    EXPECT_EQ(mu.to_vector(), (std::vector<double>{1.5, 2, 2}));
}

TEST(LbsCenters, EquivariantUnderGlobalRigidTransform) {
    Rng rng(6);
    const auto tmpl = random_human(rng, 25, 3);
    JointTransforms joints;
    for (int k = 0; k < 3; ++k) {
        joints.rotations.push_back(random_rotation(rng));
        joints.translations.emplace_back(rng.normal(), rng.normal(), rng.normal());
    }
    const Eigen::Matrix3d g = random_rotation(rng);
    const Eigen::Vector3d gt(0.3, -1.2, 2.0);
    JointTransforms moved = joints;
    for (int k = 0; k < 3; ++k) {
        moved.rotations[k] = g * joints.rotations[k];
        moved.translations[k] = g * joints.translations[k] + gt;
    }
    const ad::Tensor<double> w({25, 3}, tmpl.weights);
    const auto a = lbs_pose_centers(tmpl, joints, w);
    const auto b = lbs_pose_centers(tmpl, moved, w);
    for (std::size_t i = 0; i < 25; ++i) {
        const Eigen::Vector3d expected = g * Eigen::Vector3d(a.at(i * 3), a.at(i * 3 + 1), a.at(i * 3 + 2)) + gt;
        for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(b.at(i * 3 + c), expected[c], 1e-12);
        }
    }
}

TEST(LbsCenters, ShapeMismatchThrows) {
    Rng rng(7);
    const auto tmpl = random_human(rng, 4, 2);
    EXPECT_THROW(lbs_pose_centers(tmpl, JointTransforms::identity(3), ad::Tensor<double>::zeros({4, 2})),
                 ContractViolation);
}

TEST(LbsCenters, GradientsReachNetworkParameters) {
    ad::ParameterStore<double> store;
    Rng rng(8);
    const auto net = make_lbs_network(store, "lbs", 3, rng);
    for (auto& w : net.output.weight.node()->value) {
        w = rng.uniform(-0.3, 0.3); // leave the zero start so every layer matters
    }
    auto tmpl = random_human(rng, 200, 3);
    testing::move_off_relu_kinks(tmpl, net, rng, -0.5, 0.5, 1e-3);
    JointTransforms joints;
    for (int k = 0; k < 3; ++k) {
        joints.rotations.push_back(random_rotation(rng));
        joints.translations.emplace_back(rng.normal(), rng.normal(), rng.normal());
    }
    const ad::Tensor<double> base({200, 3}, tmpl.weights);
    const ad::Tensor<double> probe = [&] {
        std::vector<double> p(600);
        for (auto& x : p) x = rng.uniform(-1, 1);
        return ad::Tensor<double>({200, 3}, p);
    }();
    auto f = [&]() {
        const auto w = modulate_weights(base, predict_modulation(net, tmpl));
        return ad::sum(ad::mul(lbs_pose_centers(tmpl, joints, w), probe));
    };
    const auto r = ad::grad_check_parameters(f, store.parameters(), {1e-4, 16, 1});
    EXPECT_TRUE(r.passed(1e-3)) << r.max_relative_error << " " << r.worst_tensor;
}

TEST(BlendRotations, GradientMatchesFiniteDifferences) {
    Rng rng(9);
    JointTransforms joints;
    for (int k = 0; k < 4; ++k) {
        joints.rotations.push_back(random_rotation(rng));
        joints.translations.emplace_back(0, 0, 0);
    }
    std::vector<double> w(20);
    for (auto& x : w) x = rng.uniform(0, 1);
    const auto r = ad::grad_check(
        [&](const ad::Tensor<double>& x) {
            return ad::sum(ad::square(blend_rotations(joints, x)));
        },
        ad::Tensor<double>({5, 4}, w), 1e-4);
    EXPECT_TRUE(r.passed(1e-3));
}

TEST(LbsCovariance, Examples) {
    const Eigen::Matrix3d sc = Eigen::Vector3d(4, 1, 1).asDiagonal();
    const std::vector<double> one{1.0};
    EXPECT_EQ(lbs_pose_covariance(sc, JointTransforms::identity(1), one).sigma, sc);

    JointTransforms quarter = JointTransforms::identity(1);
    quarter.rotations[0] = rot_z(std::numbers::pi / 2);
    const auto q = lbs_pose_covariance(sc, quarter, one);
    EXPECT_LT((q.sigma - Eigen::Matrix3d(Eigen::Vector3d(1, 4, 1).asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);

    JointTransforms opposed = JointTransforms::identity(2);
    opposed.rotations[1] = rot_z(std::numbers::pi);
    const std::vector<double> half{0.5, 0.5};
    const auto d = lbs_pose_covariance(sc, opposed, half);
    EXPECT_LT((d.blend - Eigen::Matrix3d(Eigen::Vector3d(0, 0, 1).asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((d.sigma - Eigen::Matrix3d(Eigen::Vector3d(0, 0, 1).asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LbsCovariance, BlendedTensorMatchesScalarForm) {
    Rng rng(10);
    JointTransforms joints;
    for (int k = 0; k < 3; ++k) {
        joints.rotations.push_back(random_rotation(rng));
        joints.translations.emplace_back(0, 0, 0);
    }
    const std::vector<double> w{0.2, 0.5, 0.3};
    const auto blended = blend_rotations(joints, ad::Tensor<double>({1, 3}, w));
    const auto scalar = lbs_pose_covariance(Eigen::Matrix3d::Identity(), joints, w);
    for (int e = 0; e < 9; ++e) {
        EXPECT_NEAR(blended.at(e), scalar.blend(e / 3, e % 3), 1e-15);
    }
    const Eigen::Matrix3d polar = nearest_rotation(scalar.blend);
    EXPECT_NO_THROW(require_rotation(polar, "polar"));
}

TEST(RigidPose, Examples) {
    const std::vector<double> v{1, 0, 0, 0, 2, 0};
    RigidPose identity;
    EXPECT_EQ(pose_rigid_object(v, identity).centers, v);
    RigidPose shift;
    shift.translation = {1, 2, 3};
    EXPECT_EQ(pose_rigid_object(v, shift).centers, (std::vector<double>{2, 2, 3, 1, 4, 3}));
    RigidPose turn;
    turn.rotation = rot_z(std::numbers::pi / 2);
    const auto p = pose_rigid_object(v, turn).centers;
    EXPECT_NEAR(p[0], 0.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0, 1e-15);
    EXPECT_NEAR(p[2], 0.0, 1e-15);
}

TEST(RigidPose, RejectsImproperRotation) {
    RigidPose bad;
    bad.rotation(0, 0) = -1; // reflection
    EXPECT_THROW(pose_rigid_object(std::vector<double>{0, 0, 0}, bad), ContractViolation);
    RigidPose sheared;
    sheared.rotation(0, 1) = 1e-3;
    EXPECT_THROW(pose_rigid_object(std::vector<double>{0, 0, 0}, sheared), ContractViolation);
}

TEST(RigidPose, PreservesDistancesAndComposesRotations) {
    Rng rng(11);
    std::vector<double> v(60), q(80);
    for (auto& x : v) x = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 20; ++i) {
        Eigen::Vector4d r(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        r.normalize();
        for (int c = 0; c < 4; ++c) q[i * 4 + c] = r[c];
    }
    RigidPose pose;
    pose.rotation = random_rotation(rng);
    pose.translation = {0.5, -2, 1};
    const auto posed = pose_rigid_object(v, pose, q);
    for (std::size_t i = 0; i < 20; ++i) {
        for (std::size_t j = i + 1; j < 20; ++j) {
            double a = 0, b = 0;
            for (int c = 0; c < 3; ++c) {
                a += std::pow(v[i * 3 + c] - v[j * 3 + c], 2);
                b += std::pow(posed.centers[i * 3 + c] - posed.centers[j * 3 + c], 2);
            }
            EXPECT_NEAR(std::sqrt(a), std::sqrt(b), 1e-6);
        }
        // Posed covariance equals R_obj Sigma R_obj^T.
        const Eigen::Vector4d qi(q[i * 4], q[i * 4 + 1], q[i * 4 + 2], q[i * 4 + 3]);
        const Eigen::Vector4d qp(posed.rotations[i * 4], posed.rotations[i * 4 + 1],
                                 posed.rotations[i * 4 + 2], posed.rotations[i * 4 + 3]);
        const Eigen::Vector3d s(0.1, 0.2, 0.3);
        const Eigen::Matrix3d expected =
            pose.rotation * gs::covariance_from_rotation_scale(qi, s) * pose.rotation.transpose();
        EXPECT_LT((gs::covariance_from_rotation_scale(qp, s) - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
    const auto composed = compose_rotation(ad::Tensor<double>({20, 4}, q), pose.rotation);
    for (std::size_t k = 0; k < 80; ++k) {
        EXPECT_NEAR(composed.at(k), posed.rotations[k], 1e-12);
    }
}

TEST(InitializeAttributes, GenericValues) {
    std::vector<double> grid;
    for (int x = 0; x < 4; ++x) {
        for (int y = 0; y < 3; ++y) {
            grid.insert(grid.end(), {double(x), double(y), 0.0});
        }
    }
    const auto set = initialize_gaussian_attributes<double>(grid, 1);
    ASSERT_EQ(set.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(1.0 / (1.0 + std::exp(-set.opacity_logit.at(i))), 0.5);
        for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(std::exp(set.log_scale.at(i * 3 + c)), 0.5, 1e-15);
        }
        EXPECT_EQ(set.rotation.at(i * 4), 1.0);
    }
    for (double c : set.sh.data()) {
        EXPECT_EQ(c, 0.0);
    }
    const auto single = initialize_gaussian_attributes<double>(std::vector<double>{1, 2, 3}, 1);
    EXPECT_NEAR(std::exp(single.log_scale.at(0)), kDefaultSingleVertexScale, 1e-15);
}

TEST(Template, ValidationNamesVertex) {
    Rng rng(12);
    auto tmpl = random_human(rng, 6, 2);
    EXPECT_NO_THROW(tmpl.validate());
    tmpl.weights[4 * 2] += 0.1;
    try {
        tmpl.validate();
        FAIL();
    } catch (const ContractViolation& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 4"), std::string::npos);
    }
}

} // namespace
} // namespace mmgs::deform
