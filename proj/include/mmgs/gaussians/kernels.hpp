#pragma once

// Scalar-generic per-Gaussian math. Every function works for plain floating
// point types and for ad::Dual, which is how the rasterizer obtains the
// Jacobians of projection, covariance assembly and SH evaluation.

#include "mmgs/ad/dual.hpp"

#include <array>
#include <cmath>

namespace mmgs::gs::kernels {

using std::exp;
using std::sqrt;
using ad::exp;
using ad::sqrt;

template <class S>
using Vec3 = std::array<S, 3>;
template <class S>
using Mat3 = std::array<S, 9>; // row-major

/// Camera constants in the working precision.
template <class T>
struct CameraParams {
    std::array<T, 9> R{};
    std::array<T, 3> t{};
    T fx{}, fy{}, skew{}, cx{}, cy{};
    std::array<T, 3> center{};
    int width = 0;
    int height = 0;
};

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                    -1.0925484305920792, 0.5462742152960396};
inline constexpr double kShC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                    0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                    -0.5900435899266435};

/// Real SH basis values Y_b(x, y, z) for a unit direction, b < (degree+1)^2.
template <class S>
void sh_basis(int degree, const S& x, const S& y, const S& z, S* out) {
    using T = decltype(ad::value_of(x));
    out[0] = S(T(kShC0));
    if (degree < 1) {
        return;
    }
    out[1] = S(T(-kShC1)) * y;
    out[2] = S(T(kShC1)) * z;
    out[3] = S(T(-kShC1)) * x;
    if (degree < 2) {
        return;
    }
    const S xx = x * x, yy = y * y, zz = z * z;
    const S xy = x * y, yz = y * z, xz = x * z;
    out[4] = S(T(kShC2[0])) * xy;
    out[5] = S(T(kShC2[1])) * yz;
    out[6] = S(T(kShC2[2])) * (S(T(2)) * zz - xx - yy);
    out[7] = S(T(kShC2[3])) * xz;
    out[8] = S(T(kShC2[4])) * (xx - yy);
    if (degree < 3) {
        return;
    }
    out[9] = S(T(kShC3[0])) * y * (S(T(3)) * xx - yy);
    out[10] = S(T(kShC3[1])) * xy * z;
    out[11] = S(T(kShC3[2])) * y * (S(T(4)) * zz - xx - yy);
    out[12] = S(T(kShC3[3])) * z * (S(T(2)) * zz - S(T(3)) * xx - S(T(3)) * yy);
    out[13] = S(T(kShC3[4])) * x * (S(T(4)) * zz - xx - yy);
    out[14] = S(T(kShC3[5])) * z * (xx - yy);
    out[15] = S(T(kShC3[6])) * x * (xx - S(T(3)) * yy);
}

/// Rotation matrix of q / |q| with q = (w, x, y, z).
template <class S>
Mat3<S> rotation_from_quaternion(const std::array<S, 4>& q) {
    const S norm = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const S w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    using T = decltype(ad::value_of(w));
    const S one(T(1)), two(T(2));
    return {one - two * (y * y + z * z), two * (x * y - w * z),       two * (x * z + w * y),
            two * (x * y + w * z),       one - two * (x * x + z * z), two * (y * z - w * x),
            two * (x * z - w * y),       two * (y * z + w * x),       one - two * (x * x + y * y)};
}

template <class S>
Mat3<S> matmul3(const Mat3<S>& a, const Mat3<S>& b) {
    Mat3<S> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out[i * 3 + j] = a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] + a[i * 3 + 2] * b[6 + j];
        }
    }
    return out;
}

/// M M^T
template <class S>
Mat3<S> gram3(const Mat3<S>& m) {
    Mat3<S> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) {
            out[i * 3 + j] =
                m[i * 3] * m[j * 3] + m[i * 3 + 1] * m[j * 3 + 1] + m[i * 3 + 2] * m[j * 3 + 2];
            out[j * 3 + i] = out[i * 3 + j];
        }
    }
    return out;
}

/// Sigma = L R diag(s)^2 R^T L^T, with L optional (nullptr = identity).
template <class S>
Mat3<S> covariance(const std::array<S, 4>& quaternion, const Vec3<S>& scale,
                   const Mat3<S>* deformation) {
    Mat3<S> m = rotation_from_quaternion(quaternion);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            m[i * 3 + j] *= scale[j];
        }
    }
    if (deformation) {
        m = matmul3(*deformation, m);
    }
    return gram3(m);
}

template <class S>
struct Projection {
    S u{}, v{};               // pixel coordinates
    S cov00{}, cov01{}, cov11{}; // screen covariance including low-pass
    S depth{};                // camera-space z
};

/// EWA projection of a world-space Gaussian (mu, Sigma).
template <class S, class T>
Projection<S> project(const Vec3<S>& mu, const Mat3<S>& sigma, const CameraParams<T>& cam,
                      T low_pass) {
    const auto& R = cam.R;
    Vec3<S> p;
    for (int i = 0; i < 3; ++i) {
        p[i] = S(R[i * 3]) * mu[0] + S(R[i * 3 + 1]) * mu[1] + S(R[i * 3 + 2]) * mu[2] +
               S(cam.t[i]);
    }
    const S inv_z = S(T(1)) / p[2];
    const S a = (S(cam.fx) * p[0] + S(cam.skew) * p[1]) * inv_z;
    const S b = S(cam.fy) * p[1] * inv_z;
    Projection<S> out;
    out.u = a + S(cam.cx);
    out.v = b + S(cam.cy);
    out.depth = p[2];

    // J = d(u, v) / d(p), rows 0 and 1.
    const S j00 = S(cam.fx) * inv_z, j01 = S(cam.skew) * inv_z, j02 = -a * inv_z;
    const S j11 = S(cam.fy) * inv_z, j12 = -b * inv_z;
    // T = J R (2x3)
    std::array<S, 6> jr;
    for (int c = 0; c < 3; ++c) {
        jr[c] = j00 * S(R[c]) + j01 * S(R[3 + c]) + j02 * S(R[6 + c]);
        jr[3 + c] = j11 * S(R[3 + c]) + j12 * S(R[6 + c]);
    }
    // jr * Sigma * jr^T
    std::array<S, 6> js;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) {
            js[r * 3 + c] = jr[r * 3] * sigma[c] + jr[r * 3 + 1] * sigma[3 + c] +
                            jr[r * 3 + 2] * sigma[6 + c];
        }
    }
    out.cov00 = js[0] * jr[0] + js[1] * jr[1] + js[2] * jr[2] + S(low_pass);
    out.cov01 = js[0] * jr[3] + js[1] * jr[4] + js[2] * jr[5];
    out.cov11 = js[3] * jr[3] + js[4] * jr[4] + js[5] * jr[5] + S(low_pass);
    return out;
}

/// Inverse of the symmetric 2x2 covariance as (a, b, c) of [[a, b], [b, c]].
template <class S>
std::array<S, 3> conic_from(const Projection<S>& p) {
    const S det = p.cov00 * p.cov11 - p.cov01 * p.cov01;
    const S inv = S(decltype(ad::value_of(det))(1)) / det;
    return {p.cov11 * inv, -p.cov01 * inv, p.cov00 * inv};
}

} // namespace mmgs::gs::kernels
