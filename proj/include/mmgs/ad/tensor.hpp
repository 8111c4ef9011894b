#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmgs::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <std::floating_point T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty until populated
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents that require grad.
    std::function<void(Node&)> backward;
    std::string name;

    bool is_leaf() const noexcept { return !backward; }

    T* grad_buffer() {
        if (grad.empty()) {
            grad.assign(value.size(), T(0));
        }
        return grad.data();
    }
};

} // namespace detail

/// Recording switch for the current thread. Recording is on by default.
class GradMode {
public:
    static bool enabled() noexcept;
    static void set_enabled(bool enabled) noexcept;
};

class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major array with reverse-mode gradient recording.
///
/// Tensor is a shared handle: copies alias the same storage and graph node.
/// Results of recorded operations keep their inputs alive until the last
/// handle to the result goes away.
template <std::floating_point T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return data().size(); }

    std::span<const T> data() const;
    /// Writable storage; only leaves may be mutated.
    std::span<T> mutable_data();
    T item() const;
    T at(std::size_t flat_index) const { return data()[flat_index]; }
    std::vector<T> to_vector() const { return {data().begin(), data().end()}; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const T> grad() const;
    std::span<T> mutable_grad();
    void zero_grad();
    void clear_grad();

    const std::string& name() const;
    Tensor& set_name(std::string name);

    /// New leaf holding a copy of the values, outside any recorded graph.
    Tensor detach() const;

    const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

private:
    detail::Node<T>& checked() const;

    std::shared_ptr<detail::Node<T>> node_;
};

/// Builds the result of an operation, recording `backward` only when grad
/// mode is on and at least one input requires a gradient.
///
/// `backward` receives the result node; `node.parents[i]` is `inputs[i]`.
template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward);

/// Gradient buffer of parent `index` if it wants one, nullptr otherwise.
template <std::floating_point T>
T* parent_grad(detail::Node<T>& node, std::size_t index) {
    auto& parent = node.parents[index];
    return parent->requires_grad ? parent->grad_buffer() : nullptr;
}

/// Reverse-mode propagation from a scalar. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed from scratch each call.
template <std::floating_point T>
void backward(const Tensor<T>& loss);

} // namespace mmgs::ad
