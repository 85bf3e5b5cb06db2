#pragma once

#include <cstddef>
#include <vector>

#include "rfn/autograd.hpp"

namespace rfn {

/// Border handling for convolutions. Reflection degenerates to replication on
/// axes of length 1.
enum class PadMode { zero, reflect };

enum class Activation { relu, leaky_relu };

namespace ops {

/// Stride-1 2-D cross-correlation. weight is (Cout, Cin, k, k) with odd k, bias is (Cout).
/// Output spatial size is H + 2*padding - k + 1.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t padding,
              PadMode mode = PadMode::zero);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.01));

template <typename T>
Var<T> activate(const Var<T>& x, Activation act) {
    return act == Activation::relu ? relu(x) : leaky_relu(x);
}

/// 2x2 max pooling, stride 2. Ties route the gradient to the first element in
/// row-major window order.
template <typename T>
Var<T> maxpool2(const Var<T>& x);

/// Nearest-neighbour 2x upsampling.
template <typename T>
Var<T> upsample2(const Var<T>& x);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

/// scale * x + shift, elementwise.
template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift = T{0});

/// Sum of all elements, shape {1}.
template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// sum(x * weights) for a constant weight tensor of the same shape.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

/// sum((a - b)^2) / numel.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b);

}  // namespace ops

namespace testing {

/// Deliberate backward-pass corruption used to prove the gradient checker bites.
enum class Fault { none, conv2d_backward };

void set_fault(Fault fault) noexcept;
Fault current_fault() noexcept;

class ScopedFault {
public:
    explicit ScopedFault(Fault fault) : previous_(current_fault()) { set_fault(fault); }
    ~ScopedFault() { set_fault(previous_); }
    ScopedFault(const ScopedFault&) = delete;
    ScopedFault& operator=(const ScopedFault&) = delete;

private:
    Fault previous_;
};

}  // namespace testing

}  // namespace rfn
