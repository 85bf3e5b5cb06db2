#include "rfn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace rfn {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    for (auto d : dims_) {
        if (d == 0) throw ShapeError("shape dimensions must be positive, got " + str());
    }
}

std::size_t Shape::numel() const noexcept {
    if (dims_.empty()) return 0;
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t Shape::axis4(std::size_t axis) const {
    if (dims_.size() != 4) throw ShapeError("expected a rank-4 tensor, got " + str());
    return dims_[axis];
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) os << ',';
        os << dims_[i];
    }
    os << ')';
    return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
    }
}

template <typename T>
T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_.c() + c) * shape_.h() + y) * shape_.w() + x];
}

template <typename T>
const T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_.c() + c) * shape_.h() + y) * shape_.w() + x];
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw UsageError("item() on a tensor of shape " + shape_.str());
    return data_[0];
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::slice_channels(std::size_t begin, std::size_t end) const {
    const auto n = shape_.n(), c = shape_.c(), hw = shape_.h() * shape_.w();
    if (begin >= end || end > c) throw ShapeError("channel slice out of range for " + shape_.str());
    Tensor out(Shape{n, end - begin, shape_.h(), shape_.w()});
    for (std::size_t b = 0; b < n; ++b) {
        std::memcpy(out.raw() + b * (end - begin) * hw, raw() + (b * c + begin) * hw, (end - begin) * hw * sizeof(T));
    }
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::sample(std::size_t index) const {
    const auto n = shape_.n();
    if (index >= n) throw ShapeError("batch index out of range for " + shape_.str());
    const auto per = size() / n;
    std::vector<T> out(data_.begin() + index * per, data_.begin() + (index + 1) * per);
    return Tensor(Shape{1, shape_.c(), shape_.h(), shape_.w()}, std::move(out));
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) throw ShapeError("stack_batch of an empty list");
    const auto& s0 = items.front().shape();
    std::size_t n = 0;
    std::vector<T> data;
    for (const auto& t : items) {
        if (t.shape().c() != s0.c() || t.shape().h() != s0.h() || t.shape().w() != s0.w()) {
            throw ShapeError("stack_batch: mismatched item shape " + t.shape().str() + " vs " + s0.str());
        }
        n += t.shape().n();
        data.insert(data.end(), t.data().begin(), t.data().end());
    }
    return Tensor<T>(Shape{n, s0.c(), s0.h(), s0.w()}, std::move(data));
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    Tensor<T> out = x;
    for (auto& v : out.data()) v = std::clamp(v, lo, hi);
    return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    T worst{0};
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<T>(std::abs(a[i] - b[i])));
    return worst;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> stack_batch(std::span<const Tensor<float>>);
template Tensor<double> stack_batch(std::span<const Tensor<double>>);
template Tensor<float> clamp(const Tensor<float>&, float, float);
template Tensor<double> clamp(const Tensor<double>&, double, double);
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace rfn
