#pragma once

#include <string>
#include <string_view>

#include "rfn/networks.hpp"

namespace rfn::strategy {

// Handcrafted replacements for the RFN blocks. Every function maps two
// (N,C,H,W) feature tensors of identical shape to one of the same shape. Weighted
// strategies fall back to 0.5/0.5 where both activities are zero.

template <typename T>
Tensor<T> fuse_add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> fuse_max(const Tensor<T>& a, const Tensor<T>& b);

/// Spatial weight of `a`: per-pixel channel l1-norm, box-averaged over a
/// (2 radius + 1)^2 neighbourhood clipped to the image. Shape (N,1,H,W).
template <typename T>
Tensor<T> l1norm_weights(const Tensor<T>& a, const Tensor<T>& b, std::size_t radius = 1);

template <typename T>
Tensor<T> fuse_l1norm(const Tensor<T>& a, const Tensor<T>& b, std::size_t radius = 1);

/// Sum of singular values of an h x w row-major matrix.
double nuclear_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols);

/// Per-channel weight of `a` from nuclear norms. Shape (N,C,1,1).
template <typename T>
Tensor<T> nuclear_weights(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> fuse_nuclear(const Tensor<T>& a, const Tensor<T>& b);

/// Per-channel weight of `a` from global average pooling. Shape (N,C,1,1).
template <typename T>
Tensor<T> channel_weights(const Tensor<T>& a, const Tensor<T>& b);

/// Mean of a spatial branch (per-pixel l1 weights, no neighbourhood averaging) and a
/// channel branch (average-pooling weights).
template <typename T>
Tensor<T> fuse_sca(const Tensor<T>& a, const Tensor<T>& b);

enum class StrategyKind { add, max, l1_norm, nuclear_norm, sca };

template <typename T>
Tensor<T> apply(StrategyKind kind, const Tensor<T>& a, const Tensor<T>& b);

/// How the four scales are fused in the full pipeline: the trained RFN blocks or a
/// handcrafted strategy applied at every scale.
enum class FusionMethod { rfn, add, max, l1, nuclear, sca };

/// Parses rfn|add|max|l1|nuclear|sca. Throws ConfigError otherwise.
FusionMethod parse_fusion_method(std::string_view name);
std::string to_string(FusionMethod method);

/// pad -> encode -> fuse every scale -> decode -> crop -> clamp.
template <typename T>
Tensor<T> fuse_with(const ImagePair<T>& pair, const ModelWeights<T>& w, FusionMethod method);

}  // namespace rfn::strategy
