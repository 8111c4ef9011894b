#include "mmgs/ad/tensor.hpp"

#include "mmgs/common/error.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace mmgs::ad {

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) noexcept { grad_mode_enabled = enabled; }

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (const auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ']';
    return out.str();
}

template <std::floating_point T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    for (const auto d : shape) {
        if (d == 0) {
            throw ContractViolation("tensor shape " + shape_string(shape) +
                                    " has a zero dimension");
        }
    }
    if (shape_numel(shape) != values.size()) {
        throw ContractViolation("tensor shape " + shape_string(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::Node<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

template <std::floating_point T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

template <std::floating_point T>
detail::Node<T>& Tensor<T>::checked() const {
    if (!node_) {
        throw ContractViolation("use of an undefined tensor");
    }
    return *node_;
}

template <std::floating_point T>
const Shape& Tensor<T>::shape() const {
    return checked().shape;
}

template <std::floating_point T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ContractViolation("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_string(s));
    }
    return s[axis];
}

template <std::floating_point T>
std::span<const T> Tensor<T>::data() const {
    return checked().value;
}

template <std::floating_point T>
std::span<T> Tensor<T>::mutable_data() {
    auto& node = checked();
    if (!node.is_leaf()) {
        throw ContractViolation("only leaf tensors may be mutated");
    }
    return node.value;
}

template <std::floating_point T>
T Tensor<T>::item() const {
    const auto values = data();
    if (values.size() != 1) {
        throw ContractViolation("item() on tensor of shape " + shape_string(shape()));
    }
    return values[0];
}

template <std::floating_point T>
bool Tensor<T>::requires_grad() const {
    return checked().requires_grad;
}

template <std::floating_point T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
    auto& node = checked();
    if (!node.is_leaf()) {
        throw ContractViolation("requires_grad can only be changed on leaf tensors");
    }
    node.requires_grad = value;
    return *this;
}

template <std::floating_point T>
bool Tensor<T>::is_leaf() const {
    return checked().is_leaf();
}

template <std::floating_point T>
bool Tensor<T>::has_grad() const {
    return !checked().grad.empty();
}

template <std::floating_point T>
std::span<const T> Tensor<T>::grad() const {
    auto& node = checked();
    if (node.grad.empty()) {
        throw ContractViolation("tensor '" + node.name + "' has no gradient");
    }
    return node.grad;
}

template <std::floating_point T>
std::span<T> Tensor<T>::mutable_grad() {
    auto& node = checked();
    return {node.grad_buffer(), node.value.size()};
}

template <std::floating_point T>
void Tensor<T>::zero_grad() {
    auto& node = checked();
    node.grad.assign(node.value.size(), T(0));
}

template <std::floating_point T>
void Tensor<T>::clear_grad() {
    auto& node = checked();
    node.grad.clear();
    node.grad.shrink_to_fit();
}

template <std::floating_point T>
const std::string& Tensor<T>::name() const {
    return checked().name;
}

template <std::floating_point T>
Tensor<T>& Tensor<T>::set_name(std::string name) {
    checked().name = std::move(name);
    return *this;
}

template <std::floating_point T>
Tensor<T> Tensor<T>::detach() const {
    const auto& node = checked();
    Tensor out(node.shape, node.value, false);
    out.set_name(node.name);
    return out;
}

template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward) {
    Tensor<T> result(std::move(shape), std::move(value), false);
    if (!GradMode::enabled()) {
        return result;
    }
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
    if (!any) {
        return result;
    }
    auto& node = *result.node();
    node.requires_grad = true;
    node.parents.reserve(inputs.size());
    for (const auto& input : inputs) {
        node.parents.push_back(input.node());
    }
    node.backward = std::move(backward);
    return result;
}

template <std::floating_point T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw ContractViolation("backward requires a scalar loss, got shape " +
                                shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        return;
    }

    // Iterative post-order DFS yields parents before children.
    using NodeT = detail::Node<T>;
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> visited;
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    NodeT* root = loss.node().get();
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next_parent] = stack.back();
        if (next_parent < node->parents.size()) {
            NodeT* parent = node->parents[next_parent++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    for (NodeT* node : order) {
        if (!node->is_leaf()) {
            node->grad.assign(node->value.size(), T(0));
        }
    }
    root->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->is_leaf()) {
            (*it)->backward(**it);
        }
    }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&,
                                    std::function<void(detail::Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

} // namespace mmgs::ad
