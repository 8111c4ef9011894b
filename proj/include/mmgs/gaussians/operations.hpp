#pragma once

#include "mmgs/gaussians/camera.hpp"
#include "mmgs/gaussians/kernels.hpp"

#include <Eigen/Core>

#include <span>

namespace mmgs::gs {

inline constexpr double kLowPassFilter = 0.3; // px^2 added to screen covariance
inline constexpr double kNearPlane = 0.01;

/// Sigma = R(q) diag(s)^2 R(q)^T. q = (w, x, y, z) is normalized first.
/// Throws ContractViolation for a zero quaternion or non-positive scale.
Eigen::Matrix3d covariance_from_rotation_scale(const Eigen::Vector4d& q, const Eigen::Vector3d& s);

/// clamp(sum_b Y_b(dir) c_b + 0.5, 0, 1) per channel. `coeffs` holds B rows
/// of rgb; B must equal (degree+1)^2.
Eigen::Vector3d evaluate_sh_color(std::span<const double> coeffs, int degree,
                                  const Eigen::Vector3d& view_dir);

struct ProjectedGaussian {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    double depth = 0.0;
    bool culled = false; // depth <= znear; mean/cov are not meaningful then
};

ProjectedGaussian project_gaussian(const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                                   const Camera& camera, double low_pass = kLowPassFilter,
                                   double znear = kNearPlane);

template <class T>
kernels::CameraParams<T> camera_params(const Camera& camera);

/// Hamilton product a * b of (w, x, y, z) quaternions.
Eigen::Vector4d quaternion_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b);
/// Unit quaternion (w >= 0) of a proper rotation matrix.
Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& rotation);

} // namespace mmgs::gs
