#pragma once

#include "mmgs/ad/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mmgs::ad {

struct GradCheckResult {
    /// max over checked coordinates of |analytic - numeric| / max(1, |numeric|)
    double max_relative_error = 0.0;
    std::size_t worst_coordinate = 0;
    std::string worst_tensor;
    std::size_t coordinates_checked = 0;
    /// Set when the function produced a non-finite value.
    std::optional<std::size_t> nonfinite_coordinate;
    std::string nonfinite_tensor;

    bool finite() const { return !nonfinite_coordinate.has_value(); }
    bool passed(double tolerance) const { return finite() && max_relative_error < tolerance; }
};

/// Central-difference check of the gradient of f at `point`.
GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& point, double step);

struct ParameterCheckOptions {
    double step = 1e-4;
    /// 0 checks every coordinate; otherwise a seeded random subset per tensor.
    std::size_t coordinates_per_tensor = 0;
    std::uint64_t seed = 0;
};

/// Checks d f() / d p for each parameter tensor p, perturbing the parameters in
/// place (restored afterwards). `f` must rebuild its graph on every call.
GradCheckResult grad_check_parameters(const std::function<Tensor<double>()>& f,
                                      std::vector<Tensor<double>> parameters,
                                      const ParameterCheckOptions& options = {});

} // namespace mmgs::ad
