#include "mmgs/common/error.hpp"
#include "mmgs/common/rng.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"
#include "mmgs/gaussians/operations.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mmgs::gs {
namespace {

Eigen::Vector4d random_quaternion(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized();
}

TEST(Covariance, IdentityRotationUnitScale) {
    const auto sigma = covariance_from_rotation_scale({1, 0, 0, 0}, {1, 1, 1});
    EXPECT_LT((sigma - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Covariance, QuarterTurnAboutZ) {
    const double h = std::sqrt(0.5);
    const auto sigma = covariance_from_rotation_scale({h, 0, 0, h}, {2, 1, 1});
    const Eigen::Matrix3d expected = Eigen::Vector3d(1, 4, 1).asDiagonal();
    EXPECT_LT((sigma - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Vector4d q = random_quaternion(rng);
        const Eigen::Vector3d s(rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2));
        const auto sigma = covariance_from_rotation_scale(q, s);
        EXPECT_LT((sigma - sigma.transpose()).cwiseAbs().maxCoeff(), 1e-14);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(sigma);
        std::array<double, 3> got{solver.eigenvalues()[0], solver.eigenvalues()[1],
                                  solver.eigenvalues()[2]};
        std::array<double, 3> want{s[0] * s[0], s[1] * s[1], s[2] * s[2]};
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(got[k], want[k], 1e-6);
        }
        const double det = s[0] * s[0] * s[1] * s[1] * s[2] * s[2];
        EXPECT_NEAR(sigma.determinant(), det, 1e-9 * std::max(1.0, det));
    }
}

TEST(Covariance, QuaternionDoubleCover) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector4d q = random_quaternion(rng);
        const Eigen::Vector3d s(rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2));
        EXPECT_EQ(covariance_from_rotation_scale(q, s), covariance_from_rotation_scale(-q, s));
    }
}

TEST(Covariance, ScalingByTwoScalesByFourExactly) {
    Rng rng(6);
    const Eigen::Vector4d q = random_quaternion(rng);
    const Eigen::Vector3d s(0.3, 0.7, 1.1);
    EXPECT_EQ(covariance_from_rotation_scale(q, 2.0 * s), 4.0 * covariance_from_rotation_scale(q, s));
}

TEST(Covariance, ZeroQuaternionThrows) {
    EXPECT_THROW(covariance_from_rotation_scale({0, 0, 0, 0}, {1, 1, 1}), ContractViolation);
}

TEST(ShColor, DegreeZeroInversion) {
    const double y0 = 0.28209479177387814;
    const std::vector<double> c{0.5 / y0, 0.0, -0.5 / y0};
    const auto rgb = evaluate_sh_color(c, 0, {0, 0, 1});
    EXPECT_NEAR(rgb[0], 1.0, 1e-12);
    EXPECT_NEAR(rgb[1], 0.5, 1e-12);
    EXPECT_NEAR(rgb[2], 0.0, 1e-12);
}

TEST(ShColor, ZeroCoefficientsGiveMidGray) {
    Rng rng(1);
    for (int degree = 0; degree <= 3; ++degree) {
        const std::vector<double> c(sh_basis_count(degree) * 3, 0.0);
        const Eigen::Vector3d dir = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
        EXPECT_EQ(evaluate_sh_color(c, degree, dir), Eigen::Vector3d::Constant(0.5));
    }
}

TEST(ShColor, DegreeOneIsOdd) {
    Rng rng(2);
    std::vector<double> c(12, 0.0);
    for (std::size_t i = 3; i < 12; ++i) {
        c[i] = rng.uniform(-0.2, 0.2);
    }
    const Eigen::Vector3d d = Eigen::Vector3d(0.3, -0.4, 0.8).normalized();
    const Eigen::Vector3d plus = evaluate_sh_color(c, 1, d) - Eigen::Vector3d::Constant(0.5);
    const Eigen::Vector3d minus = evaluate_sh_color(c, 1, -d) - Eigen::Vector3d::Constant(0.5);
    EXPECT_LT((plus + minus).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_GT(plus.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ShColor, LinearBeforeClamp) {
    Rng rng(3);
    std::vector<double> a(27), b(27), ab(27);
    for (std::size_t i = 0; i < 27; ++i) {
        a[i] = rng.uniform(-0.05, 0.05);
        b[i] = rng.uniform(-0.05, 0.05);
        ab[i] = a[i] + b[i];
    }
    const Eigen::Vector3d d = Eigen::Vector3d(-0.2, 0.9, 0.1).normalized();
    const Eigen::Vector3d half = Eigen::Vector3d::Constant(0.5);
    const Eigen::Vector3d lhs = evaluate_sh_color(ab, 2, d) - half;
    const Eigen::Vector3d rhs = (evaluate_sh_color(a, 2, d) - half) + (evaluate_sh_color(b, 2, d) - half);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ShColor, BasisCountMismatchThrows) {
    const std::vector<double> c(9, 0.0);
    EXPECT_THROW(evaluate_sh_color(c, 1, {0, 0, 1}), ContractViolation);
}

Camera camera_100() {
    Camera cam;
    cam.K << 100, 0, 32, 0, 100, 32, 0, 0, 1;
    cam.width = 64;
    cam.height = 64;
    return cam;
}

TEST(Projection, AxisPointHitsPrincipalPoint) {
    const auto p = project_gaussian({0, 0, 1}, Eigen::Matrix3d::Identity() * 1e-4, camera_100());
    EXPECT_FALSE(p.culled);
    EXPECT_DOUBLE_EQ(p.mean.x(), 32.0);
    EXPECT_DOUBLE_EQ(p.mean.y(), 32.0);
}

TEST(Projection, PinholeOffset) {
    const auto p = project_gaussian({0.1, 0, 1}, Eigen::Matrix3d::Identity() * 1e-4, camera_100());
    EXPECT_NEAR(p.mean.x(), 42.0, 1e-12);
    EXPECT_NEAR(p.mean.y(), 32.0, 1e-12);
    EXPECT_DOUBLE_EQ(p.depth, 1.0);
}

TEST(Projection, IsotropicOnAxis) {
    const double sigma = 0.02, z = 2.0, f = 100.0;
    const auto p = project_gaussian({0, 0, z}, Eigen::Matrix3d::Identity() * sigma * sigma, camera_100());
    const double expected = f * f * sigma * sigma / (z * z) + 0.3;
    EXPECT_NEAR(p.cov(0, 0), expected, 1e-12);
    EXPECT_NEAR(p.cov(1, 1), expected, 1e-12);
    EXPECT_NEAR(p.cov(0, 1), 0.0, 1e-15);
}

TEST(Projection, BehindNearPlaneIsCulled) {
    EXPECT_TRUE(project_gaussian({0, 0, 0.005}, Eigen::Matrix3d::Identity(), camera_100()).culled);
    EXPECT_TRUE(project_gaussian({0, 0, -1}, Eigen::Matrix3d::Identity(), camera_100()).culled);
}

TEST(Projection, CovarianceIsPsdAndDepthOrderPreserved) {
    Rng rng(8);
    Camera cam = Camera::look_at({1, -2, -3}, {0, 0, 0}, {0, -1, 0}, 80, 64, 64);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Vector3d a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Eigen::Vector3d b(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const auto sigma = covariance_from_rotation_scale(random_quaternion(rng), {0.1, 0.2, 0.05});
        const auto pa = project_gaussian(a, sigma, cam);
        const auto pb = project_gaussian(b, sigma, cam);
        EXPECT_EQ(cam.to_camera(a).z() < cam.to_camera(b).z(), pa.depth < pb.depth);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(pa.cov);
        EXPECT_GE(solver.eigenvalues().minCoeff(), 0.3 - 1e-9);
    }
}

TEST(Camera, ValidateRejectsBadExtrinsicsAndIntrinsics) {
    Camera cam = camera_100();
    EXPECT_NO_THROW(cam.validate());
    Camera skewed = cam;
    skewed.R(0, 1) = 0.1;
    EXPECT_THROW(skewed.validate(), ContractViolation);
    Camera mirrored = cam;
    mirrored.R(2, 2) = -1;
    EXPECT_THROW(mirrored.validate(), ContractViolation);
    Camera bad_focal = cam;
    bad_focal.K(1, 1) = -5;
    EXPECT_THROW(bad_focal.validate(), ContractViolation);
}

TEST(Camera, LookAtPutsTargetAtPrincipalPoint) {
    const Camera cam = Camera::look_at({3, 1, -2}, {0.2, 0.1, 0.3}, {0, -1, 0}, 90, 65, 49);
    EXPECT_NO_THROW(cam.validate());
    const auto p = project_gaussian({0.2, 0.1, 0.3}, Eigen::Matrix3d::Identity() * 1e-4, cam);
    EXPECT_NEAR(p.mean.x(), cam.cx(), 1e-9);
    EXPECT_NEAR(p.mean.y(), cam.cy(), 1e-9);
    EXPECT_LT((cam.center() - Eigen::Vector3d(3, 1, -2)).norm(), 1e-12);
}

TEST(GaussianSet, ValidateChecksShapes) {
    auto set = make_gaussian_set<double>(0, {0, 0, 1}, {0, 0, 0}, {0}, {1, 0, 0, 0}, {0, 0, 0});
    EXPECT_EQ(set.size(), 1u);
    EXPECT_THROW(make_gaussian_set<double>(1, {0, 0, 1}, {0, 0, 0}, {0}, {1, 0, 0, 0}, {0, 0, 0}),
                 ContractViolation);
    EXPECT_THROW(make_gaussian_set<double>(0, {0, 0, 1}, {0, 0, 0}, {0}, {0, 0, 0, 0}, {0, 0, 0}),
                 ContractViolation);
}

TEST(GaussianSet, ConcatFillsIdentityDeformation) {
    Rng rng(4);
    testing::RandomSceneOptions plain;
    plain.count = 3;
    testing::RandomSceneOptions deformed = plain;
    deformed.count = 2;
    deformed.with_deformation = true;
    const std::vector<GaussianSet<double>> parts{testing::random_gaussians<double>(rng, plain),
                                                 testing::random_gaussians<double>(rng, deformed)};
    const auto all = concat<double>(parts);
    ASSERT_EQ(all.size(), 5u);
    ASSERT_TRUE(all.deformation.defined());
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 9; ++k) {
            EXPECT_EQ(all.deformation.at(i * 9 + k), (k % 4 == 0) ? 1.0 : 0.0);
        }
    }
    for (std::size_t k = 0; k < 18; ++k) {
        EXPECT_EQ(all.deformation.at(27 + k), parts[1].deformation.at(k));
    }
}

TEST(Quaternion, ProductMatchesRotationComposition) {
    Rng rng(12);
    const Eigen::Vector4d a = random_quaternion(rng), b = random_quaternion(rng);
    const Eigen::Vector4d ab = quaternion_multiply(a, b);
    auto rot = [](const Eigen::Vector4d& q) {
        return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
    };
    EXPECT_LT((rot(ab) - rot(a) * rot(b)).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::Vector4d back = quaternion_from_rotation(rot(a));
    EXPECT_LT((rot(back) - rot(a)).cwiseAbs().maxCoeff(), 1e-12);
}

} // namespace
} // namespace mmgs::gs
