#include "mmgs/gaussians/camera.hpp"

#include "mmgs/common/error.hpp"

#include <Eigen/Geometry>

#include <string>

namespace mmgs::gs {

void Camera::validate() const {
    const double ortho = (R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-6 || std::abs(R.determinant() - 1.0) > 1e-6) {
        throw ContractViolation("camera " + std::to_string(id) +
                                ": extrinsic rotation is not a proper rotation");
    }
    if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) {
        throw ContractViolation("camera " + std::to_string(id) + ": focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw ContractViolation("camera " + std::to_string(id) + ": image size must be positive");
    }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double focal, int width, int height, int id) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Camera cam;
    cam.id = id;
    cam.R.row(0) = right.transpose();
    cam.R.row(1) = down.transpose();
    cam.R.row(2) = forward.transpose();
    cam.t = -cam.R * eye;
    cam.K << focal, 0.0, 0.5 * (width - 1), 0.0, focal, 0.5 * (height - 1), 0.0, 0.0, 1.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace mmgs::gs
