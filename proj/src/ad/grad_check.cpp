#include "mmgs/ad/grad_check.hpp"

#include "mmgs/common/error.hpp"
#include "mmgs/common/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmgs::ad {

namespace {

void record(GradCheckResult& result, double analytic, double numeric, std::size_t coordinate,
            const std::string& tensor) {
    const double error = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    ++result.coordinates_checked;
    if (error > result.max_relative_error || result.coordinates_checked == 1) {
        result.max_relative_error = std::max(error, result.max_relative_error);
        result.worst_coordinate = coordinate;
        result.worst_tensor = tensor;
    }
}

std::vector<std::size_t> pick_coordinates(std::size_t count, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> all(count);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (limit == 0 || limit >= count) {
        return all;
    }
    for (std::size_t i = 0; i < limit; ++i) {
        std::swap(all[i], all[i + rng.below(count - i)]);
    }
    all.resize(limit);
    std::sort(all.begin(), all.end());
    return all;
}

} // namespace

GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& point, double step) {
    if (!(step > 0.0)) {
        throw ContractViolation("grad_check: step must be positive");
    }
    Tensor<double> x(point.shape(), point.to_vector(), true);
    x.set_name(point.name().empty() ? "x" : point.name());
    ParameterCheckOptions options;
    options.step = step;
    return grad_check_parameters([&]() { return f(x); }, {x}, options);
}

GradCheckResult grad_check_parameters(const std::function<Tensor<double>()>& f,
                                      std::vector<Tensor<double>> parameters,
                                      const ParameterCheckOptions& options) {
    if (!(options.step > 0.0)) {
        throw ContractViolation("grad_check: step must be positive");
    }
    GradCheckResult result;
    for (auto& p : parameters) {
        p.clear_grad();
    }
    const Tensor<double> value = f();
    if (!std::isfinite(value.item())) {
        result.nonfinite_coordinate = 0;
        result.nonfinite_tensor = "<unperturbed>";
        return result;
    }
    backward(value);

    Rng rng(options.seed);
    const double h = options.step;
    for (auto& p : parameters) {
        std::vector<double> analytic(p.numel(), 0.0);
        if (p.has_grad()) {
            analytic.assign(p.grad().begin(), p.grad().end());
        }
        auto values = p.mutable_data();
        for (const auto i : pick_coordinates(p.numel(), options.coordinates_per_tensor, rng)) {
            const double saved = values[i];
            double plus = 0.0;
            double minus = 0.0;
            {
                NoGradGuard no_grad;
                values[i] = saved + h;
                plus = f().item();
                values[i] = saved - h;
                minus = f().item();
            }
            values[i] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                result.nonfinite_coordinate = i;
                result.nonfinite_tensor = p.name();
                return result;
            }
            record(result, analytic[i], (plus - minus) / (2.0 * h), i, p.name());
        }
    }
    return result;
}

} // namespace mmgs::ad
