#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rfn/ops.hpp"
#include "rfn/optimizer.hpp"

namespace rfn {

inline constexpr std::size_t kScales = 4;

/// Layer widths and structural switches.
///
/// Pool placement: a stem conv runs at input resolution and is followed by a 2x2
/// max pool, then blocks 1..4 with a pool between consecutive blocks. Scale m
/// (1-based) therefore sits at 1/2^m of the padded input, and inputs must be
/// multiples of 16. The decoder ends with an upsample back to input resolution,
/// a 3x3 conv to `stem_channels` and a 1x1 conv to one output channel.
struct ArchitectureConfig {
    std::size_t stem_channels = 16;
    std::array<std::size_t, kScales> scale_channels{64, 112, 160, 208};
    /// Width of the RFN's internal convs per scale (Conv1..Conv4). Defaults to scale_channels.
    std::array<std::size_t, kScales> rfn_hidden_channels{64, 112, 160, 208};
    bool nest_connections = true;
    std::size_t kernel = 3;
    PadMode pad_mode = PadMode::reflect;
    Activation activation = Activation::relu;

    /// Same widths for the RFN hidden layers as for the scales.
    static ArchitectureConfig with_widths(std::size_t stem, std::array<std::size_t, kScales> scales);

    void validate() const;
    friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

enum class ParameterGroup { encoder, rfn, decoder };

ParameterGroup group_of(const std::string& parameter_name);

/// Named parameters for encoder, RFN_1..4 and decoder. Copies are deep.
template <typename T>
class ModelWeights {
public:
    ModelWeights() = default;
    ModelWeights(ArchitectureConfig arch, std::vector<Parameter<T>> params);
    ModelWeights(const ModelWeights& other);
    ModelWeights& operator=(const ModelWeights& other);
    ModelWeights(ModelWeights&&) noexcept = default;
    ModelWeights& operator=(ModelWeights&&) noexcept = default;

    [[nodiscard]] const ArchitectureConfig& arch() const noexcept { return arch_; }
    [[nodiscard]] std::vector<Parameter<T>>& params() noexcept { return params_; }
    [[nodiscard]] const std::vector<Parameter<T>>& params() const noexcept { return params_; }

    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }
    [[nodiscard]] const Parameter<T>& get(const std::string& name) const;
    [[nodiscard]] Parameter<T>& get(const std::string& name);
    /// Weight and bias of a conv layer, e.g. layer("rfn2.conv3").
    [[nodiscard]] const Var<T>& weight(const std::string& layer) const { return get(layer + ".weight").value; }
    [[nodiscard]] const Var<T>& bias(const std::string& layer) const { return get(layer + ".bias").value; }

    /// Freezes or unfreezes a group. Frozen parameters neither record gradients nor
    /// receive optimizer updates.
    void set_trainable(ParameterGroup group, bool trainable);
    void set_all_trainable(bool trainable);

    /// Order-sensitive FNV-1a digest over names and raw values of one group.
    [[nodiscard]] std::uint64_t digest(ParameterGroup group) const;

    [[nodiscard]] std::size_t element_count() const;

private:
    void rebuild_index();

    ArchitectureConfig arch_;
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Kaiming-uniform (fan-in, ReLU gain) conv weights and zero biases, deterministic in seed.
template <typename T>
ModelWeights<T> init_weights(const ArchitectureConfig& cfg, std::uint64_t seed);

/// Recovers channel widths, kernel and nest switch from parameter shapes.
/// pad_mode and activation are taken from `base`.
template <typename T>
ArchitectureConfig infer_architecture(const std::vector<Parameter<T>>& params, const ArchitectureConfig& base = {});

/// phi[m] for m = 0..3 (scale m+1), each at 1/2^(m+1) of the input resolution.
template <typename T>
struct MultiScaleFeatures {
    std::array<Var<T>, kScales> phi;

    const Var<T>& operator[](std::size_t m) const { return phi.at(m); }
    Var<T>& operator[](std::size_t m) { return phi.at(m); }
};

struct CropRecord {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t padded_height = 0;
    std::size_t padded_width = 0;
    [[nodiscard]] bool is_noop() const noexcept { return height == padded_height && width == padded_width; }
};

template <typename T>
struct PaddedImage {
    Tensor<T> image;
    CropRecord crop;
};

/// Reflection-pads bottom/right edges up to the next multiple of 16.
template <typename T>
PaddedImage<T> pad_input(const Tensor<T>& img);

template <typename T>
Tensor<T> crop_output(const Tensor<T>& img, const CropRecord& crop);

template <typename T>
MultiScaleFeatures<T> encode(const Var<T>& img, const ModelWeights<T>& w);

/// Residual fusion block of scale m (0-based).
template <typename T>
Var<T> rfn_fuse(const Var<T>& phi_ir, const Var<T>& phi_vi, std::size_t m, const ModelWeights<T>& w);

/// Nest-connected decoder. Returns the unclamped single-channel reconstruction at
/// input resolution. Uses the nest switch recorded in the weights' architecture.
template <typename T>
Var<T> decode(const MultiScaleFeatures<T>& phi, const ModelWeights<T>& w);

/// Number of tensors concatenated into decoder node (row, column), 1-based.
std::size_t decoder_node_inputs(std::size_t row, std::size_t column, bool nest);

template <typename T>
struct FusionGraph {
    MultiScaleFeatures<T> ir;
    MultiScaleFeatures<T> vi;
    MultiScaleFeatures<T> fused;
    Var<T> output;  // unclamped
};

/// Differentiable encode -> RFN per scale -> decode. Inputs must already be padded.
template <typename T>
FusionGraph<T> fuse_graph(const Var<T>& ir, const Var<T>& vi, const ModelWeights<T>& w);

/// Registered infrared/visible pair, each (N,1,H,W) in [0,1].
template <typename T>
struct ImagePair {
    Tensor<T> ir;
    Tensor<T> vi;
    std::string id;
};

/// Inference: pad both, fuse, crop, clamp to [0,1].
template <typename T>
Tensor<T> fuse_forward(const ImagePair<T>& pair, const ModelWeights<T>& w);

/// Autoencoder reconstruction (encode -> decode), cropped and clamped.
template <typename T>
Tensor<T> reconstruct(const Tensor<T>& img, const ModelWeights<T>& w);

}  // namespace rfn
