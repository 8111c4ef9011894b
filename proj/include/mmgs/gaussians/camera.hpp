#pragma once

#include <Eigen/Core>

namespace mmgs::gs {

/// Pinhole camera: intrinsics K and a world-to-camera rigid transform [R | t].
struct Camera {
    int id = 0;
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    int width = 0;
    int height = 0;

    double fx() const { return K(0, 0); }
    double fy() const { return K(1, 1); }
    double cx() const { return K(0, 2); }
    double cy() const { return K(1, 2); }

    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -R.transpose() * t; }

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return R * world + t; }

    /// Throws ContractViolation unless R is a proper rotation (1e-6), the focal
    /// entries are positive and the image size is positive.
    void validate() const;

    /// Camera at `eye` looking at `target`; image y grows along -up.
    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double focal, int width, int height,
                          int id = 0);
};

} // namespace mmgs::gs
