#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>

#include "rfn/autograd.hpp"

namespace rfn {

template <typename T>
struct Parameter {
    std::string name;
    Var<T> value;
    bool trainable = true;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam (with bias correction) or plain SGD. Moment estimates are keyed by
/// parameter name and start at zero on the first step.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

    /// Updates every trainable parameter from the gradient accumulated on its node.
    /// Parameters without a gradient are skipped.
    void step(std::span<Parameter<T>> params);

    /// Same, with gradients supplied explicitly (params.size() == grads.size()).
    void step(std::span<Parameter<T>> params, std::span<const Tensor<T>> grads);

    [[nodiscard]] std::size_t steps_taken() const noexcept { return step_; }
    [[nodiscard]] const OptimizerConfig& config() const noexcept { return config_; }
    void set_lr(double lr) noexcept { config_.lr = lr; }

private:
    struct Moments {
        std::vector<double> m, v;
    };

    void apply(Parameter<T>& p, const Tensor<T>& grad);

    OptimizerConfig config_;
    std::size_t step_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

/// Clears accumulated gradients.
template <typename T>
void zero_grad(std::span<Parameter<T>> params) {
    for (auto& p : params) p.value.zero_grad();
}

}  // namespace rfn
