#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rfn/tensor.hpp"

namespace rfn {

template <typename T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

/// One value in a computation graph. Leaves (inputs, parameters) have no backward function.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something is accumulated into it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn<T> backward_fn;

    /// Zero-initialised gradient buffer, allocated on first use.
    Tensor<T>& grad_buffer();
};

/// Shared handle to a graph node. Copying a Var aliases the node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var leaf(Tensor<T> value, bool requires_grad = false);

    [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
    [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
    [[nodiscard]] Tensor<T>& mutable_value() { return node_->value; }
    [[nodiscard]] const Tensor<T>& grad() const { return node_->grad; }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
    [[nodiscard]] bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad = Tensor<T>(); }

    [[nodiscard]] Node<T>* node() const noexcept { return node_.get(); }
    [[nodiscard]] const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Records an op result. When gradient recording is off, or no input requires a
/// gradient, the result is a constant leaf and `fn` is dropped.
template <typename T>
Var<T> record(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn<T> fn);

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate; intermediate
/// gradients are released once consumed.
template <typename T>
void backward(const Var<T>& root);

/// Thread-local switch for graph recording.
class GradMode {
public:
    static bool enabled() noexcept;
    static void set_enabled(bool on) noexcept;
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

}  // namespace rfn
