#include "mmgs/gaussians/operations.hpp"

#include "mmgs/common/error.hpp"
#include "mmgs/gaussians/gaussian_set.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <string>

namespace mmgs::gs {

Eigen::Matrix3d covariance_from_rotation_scale(const Eigen::Vector4d& q, const Eigen::Vector3d& s) {
    if (!(q.squaredNorm() > 0.0)) {
        throw ContractViolation("covariance: zero quaternion cannot be normalized");
    }
    if (!(s.minCoeff() > 0.0)) {
        throw ContractViolation("covariance: scales must be positive");
    }
    const auto sigma = kernels::covariance<double>({q[0], q[1], q[2], q[3]}, {s[0], s[1], s[2]},
                                                   nullptr);
    return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(sigma.data());
}

Eigen::Vector3d evaluate_sh_color(std::span<const double> coeffs, int degree,
                                  const Eigen::Vector3d& view_dir) {
    if (degree < 0 || degree > 3) {
        throw ContractViolation("SH degree must lie in [0, 3], got " + std::to_string(degree));
    }
    const std::size_t basis = sh_basis_count(degree);
    if (coeffs.size() != basis * 3) {
        throw ContractViolation("SH degree " + std::to_string(degree) + " needs " +
                                std::to_string(basis) + " coefficient rows, got " +
                                std::to_string(coeffs.size() / 3));
    }
    double y[16];
    kernels::sh_basis(degree, view_dir.x(), view_dir.y(), view_dir.z(), y);
    Eigen::Vector3d rgb = Eigen::Vector3d::Constant(0.5);
    for (std::size_t b = 0; b < basis; ++b) {
        for (int c = 0; c < 3; ++c) {
            rgb[c] += y[b] * coeffs[b * 3 + c];
        }
    }
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

template <class T>
kernels::CameraParams<T> camera_params(const Camera& camera) {
    kernels::CameraParams<T> p;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            p.R[i * 3 + j] = static_cast<T>(camera.R(i, j));
        }
        p.t[i] = static_cast<T>(camera.t[i]);
    }
    p.fx = static_cast<T>(camera.K(0, 0));
    p.fy = static_cast<T>(camera.K(1, 1));
    p.skew = static_cast<T>(camera.K(0, 1));
    p.cx = static_cast<T>(camera.K(0, 2));
    p.cy = static_cast<T>(camera.K(1, 2));
    const Eigen::Vector3d c = camera.center();
    p.center = {static_cast<T>(c[0]), static_cast<T>(c[1]), static_cast<T>(c[2])};
    p.width = camera.width;
    p.height = camera.height;
    return p;
}

template kernels::CameraParams<float> camera_params<float>(const Camera&);
template kernels::CameraParams<double> camera_params<double>(const Camera&);

ProjectedGaussian project_gaussian(const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                                   const Camera& camera, double low_pass, double znear) {
    ProjectedGaussian out;
    out.depth = camera.to_camera(mu).z();
    if (out.depth <= znear) {
        out.culled = true;
        return out;
    }
    kernels::Mat3<double> s;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            s[i * 3 + j] = sigma(i, j);
        }
    }
    const auto p = kernels::project<double, double>({mu.x(), mu.y(), mu.z()}, s,
                                                    camera_params<double>(camera), low_pass);
    out.mean = {p.u, p.v};
    out.cov << p.cov00, p.cov01, p.cov01, p.cov11;
    return out;
}

Eigen::Vector4d quaternion_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& rotation) {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    Eigen::Vector4d out(q.w(), q.x(), q.y(), q.z());
    return out[0] < 0.0 ? Eigen::Vector4d(-out) : out;
}

} // namespace mmgs::gs
