#include "rfn/autograd.hpp"

#include <unordered_set>

namespace rfn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() noexcept { return g_grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { g_grad_enabled = on; }

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var<T>(std::move(node));
}

template <typename T>
Var<T> record(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn<T> fn) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->op = op;
    if (GradMode::enabled()) {
        for (const auto& in : inputs) {
            if (in.requires_grad()) {
                node->requires_grad = true;
                break;
            }
        }
    }
    if (node->requires_grad) {
        for (const auto& in : inputs) {
            if (in.requires_grad()) node->parents.push_back(in.node_ptr());
        }
        node->backward_fn = std::move(fn);
    }
    return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& root) {
    if (!root.defined() || root.value().size() != 1) {
        throw UsageError("backward() needs a scalar root, got shape " +
                         (root.defined() ? root.shape().str() : std::string("<undefined>")));
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; `order` ends up children-before-parents reversed.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward_fn || node->grad.empty()) continue;
        node->backward_fn(node->grad);
        node->grad = Tensor<T>();
    }
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> record(const char*, Tensor<float>, const std::vector<Var<float>>&, BackwardFn<float>);
template Var<double> record(const char*, Tensor<double>, const std::vector<Var<double>>&, BackwardFn<double>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace rfn
