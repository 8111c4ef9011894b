#include "mmgs/gaussians/gaussian_set.hpp"

#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"

#include <cmath>
#include <string>

namespace mmgs::gs {

namespace {

template <class T>
void require_rows(const ad::Tensor<T>& t, std::size_t rows, std::size_t cols, const char* what) {
    if (!t.defined() || t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
        throw ContractViolation(std::string("GaussianSet: ") + what + " must be [" +
                                std::to_string(rows) + " x " + std::to_string(cols) + "], got " +
                                (t.defined() ? ad::shape_string(t.shape()) : "undefined"));
    }
}

} // namespace

template <std::floating_point T>
void GaussianSet<T>::validate() const {
    if (sh_degree < 0 || sh_degree > 3) {
        throw ContractViolation("GaussianSet: SH degree must lie in [0, 3]");
    }
    const std::size_t g = size();
    if (g == 0) {
        return;
    }
    require_rows(centers, g, 3, "centers");
    require_rows(sh, g, 3 * sh_basis_count(sh_degree), "sh");
    require_rows(opacity_logit, g, 1, "opacity_logit");
    require_rows(rotation, g, 4, "rotation");
    require_rows(log_scale, g, 3, "log_scale");
    if (deformation.defined()) {
        require_rows(deformation, g, 9, "deformation");
    }
    const auto q = rotation.data();
    for (std::size_t i = 0; i < g; ++i) {
        const double n2 = q[i * 4] * q[i * 4] + q[i * 4 + 1] * q[i * 4 + 1] +
                          q[i * 4 + 2] * q[i * 4 + 2] + q[i * 4 + 3] * q[i * 4 + 3];
        if (!(n2 > 0.0)) {
            throw ContractViolation("GaussianSet: zero quaternion at Gaussian " +
                                    std::to_string(i));
        }
    }
}

template <std::floating_point T>
GaussianSet<T> GaussianSet<T>::detached() const {
    GaussianSet out;
    out.sh_degree = sh_degree;
    auto copy = [](const ad::Tensor<T>& t) { return t.defined() ? t.detach() : ad::Tensor<T>{}; };
    out.centers = copy(centers);
    out.sh = copy(sh);
    out.opacity_logit = copy(opacity_logit);
    out.rotation = copy(rotation);
    out.log_scale = copy(log_scale);
    out.deformation = copy(deformation);
    return out;
}

template <std::floating_point T>
GaussianSet<T> make_gaussian_set(int sh_degree, std::vector<T> centers, std::vector<T> sh,
                                 std::vector<T> opacity_logit, std::vector<T> rotation,
                                 std::vector<T> log_scale, std::vector<T> deformation) {
    const std::size_t g = centers.size() / 3;
    const std::size_t basis = sh_basis_count(sh_degree);
    GaussianSet<T> set;
    set.sh_degree = sh_degree;
    if (g == 0) {
        return set;
    }
    set.centers = ad::Tensor<T>({g, 3}, std::move(centers));
    set.sh = ad::Tensor<T>({g, 3 * basis}, std::move(sh));
    set.opacity_logit = ad::Tensor<T>({g, 1}, std::move(opacity_logit));
    set.rotation = ad::Tensor<T>({g, 4}, std::move(rotation));
    set.log_scale = ad::Tensor<T>({g, 3}, std::move(log_scale));
    if (!deformation.empty()) {
        set.deformation = ad::Tensor<T>({g, 9}, std::move(deformation));
    }
    set.validate();
    return set;
}

template <std::floating_point T>
GaussianSet<T> concat(std::span<const GaussianSet<T>> sets) {
    GaussianSet<T> out;
    if (sets.empty()) {
        return out;
    }
    out.sh_degree = sets[0].sh_degree;
    bool any_deformation = false;
    for (const auto& s : sets) {
        if (s.sh_degree != out.sh_degree) {
            throw ContractViolation("concat: SH degree mismatch");
        }
        any_deformation = any_deformation || (s.deformation.defined() && !s.empty());
    }
    std::vector<ad::Tensor<T>> centers, sh, opacity, rotation, log_scale, deformation;
    for (const auto& s : sets) {
        if (s.empty()) {
            continue;
        }
        centers.push_back(s.centers);
        sh.push_back(s.sh);
        opacity.push_back(s.opacity_logit);
        rotation.push_back(s.rotation);
        log_scale.push_back(s.log_scale);
        if (any_deformation) {
            if (s.deformation.defined()) {
                deformation.push_back(s.deformation);
            } else {
                std::vector<T> identity(s.size() * 9, T(0));
                for (std::size_t i = 0; i < s.size(); ++i) {
                    identity[i * 9] = identity[i * 9 + 4] = identity[i * 9 + 8] = T(1);
                }
                deformation.emplace_back(ad::Shape{s.size(), 9}, std::move(identity));
            }
        }
    }
    if (centers.empty()) {
        return out;
    }
    auto join = [](const std::vector<ad::Tensor<T>>& parts) {
        return parts.size() == 1 ? parts[0] : ad::concat_rows<T>(parts);
    };
    out.centers = join(centers);
    out.sh = join(sh);
    out.opacity_logit = join(opacity);
    out.rotation = join(rotation);
    out.log_scale = join(log_scale);
    if (any_deformation) {
        out.deformation = join(deformation);
    }
    return out;
}

template struct GaussianSet<float>;
template struct GaussianSet<double>;
template GaussianSet<float> make_gaussian_set(int, std::vector<float>, std::vector<float>,
                                              std::vector<float>, std::vector<float>,
                                              std::vector<float>, std::vector<float>);
template GaussianSet<double> make_gaussian_set(int, std::vector<double>, std::vector<double>,
                                               std::vector<double>, std::vector<double>,
                                               std::vector<double>, std::vector<double>);
template GaussianSet<float> concat(std::span<const GaussianSet<float>>);
template GaussianSet<double> concat(std::span<const GaussianSet<double>>);

} // namespace mmgs::gs
