#include "rfn/optimizer.hpp"

#include <cmath>

namespace rfn {

template <typename T>
void Optimizer<T>::step(std::span<Parameter<T>> params) {
    ++step_;
    for (auto& p : params) {
        if (!p.trainable || p.value.grad().empty()) continue;
        apply(p, p.value.grad());
    }
}

template <typename T>
void Optimizer<T>::step(std::span<Parameter<T>> params, std::span<const Tensor<T>> grads) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i].value.shape(), grads[i].shape(), ("optimizer: " + params[i].name).c_str());
    }
    ++step_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].trainable) apply(params[i], grads[i]);
    }
}

template <typename T>
void Optimizer<T>::apply(Parameter<T>& p, const Tensor<T>& grad) {
    require_same_shape(p.value.shape(), grad.shape(), ("optimizer: " + p.name).c_str());
    auto& value = p.value.mutable_value();
    const double lr = config_.lr;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < value.size(); ++i) value[i] = static_cast<T>(value[i] - lr * grad[i]);
        return;
    }

    auto& mom = moments_[p.name];
    if (mom.m.empty()) {
        mom.m.assign(value.size(), 0.0);
        mom.v.assign(value.size(), 0.0);
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
        mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
        const double update = lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + config_.epsilon);
        value[i] = static_cast<T>(value[i] - update);
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace rfn
