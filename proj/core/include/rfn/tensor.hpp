#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rfn/error.hpp"

namespace rfn {

/// Dimensions of a tensor. Network tensors are rank 4 (batch, channel, height, width);
/// scalars produced by losses have shape {1}.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
    [[nodiscard]] std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    [[nodiscard]] std::size_t numel() const noexcept;
    [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    // Rank-4 accessors; throw ShapeError on other ranks.
    [[nodiscard]] std::size_t n() const { return axis4(0); }
    [[nodiscard]] std::size_t c() const { return axis4(1); }
    [[nodiscard]] std::size_t h() const { return axis4(2); }
    [[nodiscard]] std::size_t w() const { return axis4(3); }

    [[nodiscard]] std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    [[nodiscard]] std::size_t axis4(std::size_t axis) const;

    std::vector<std::size_t> dims_;
};

/// Dense row-major real array. Plain value type: copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> data);

    static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<T> data() noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] T* raw() noexcept { return data_.data(); }
    [[nodiscard]] const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
    const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

    /// Value of a shape-{1} tensor.
    [[nodiscard]] T item() const;

    void fill(T value);
    [[nodiscard]] bool all_finite() const;

    /// Channels [begin, end) of a rank-4 tensor.
    [[nodiscard]] Tensor slice_channels(std::size_t begin, std::size_t end) const;
    /// Sample `index` of the batch axis, keeping rank 4.
    [[nodiscard]] Tensor sample(std::size_t index) const;

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

/// Stacks rank-4 tensors with batch 1 (or any batch) along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items);

/// Clamps every value to [lo, hi].
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace rfn
