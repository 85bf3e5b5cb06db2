#include "rfn/networks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rfn/random.hpp"

namespace rfn {

namespace {

struct LayerSpec {
    std::string name;
    std::size_t cout, cin, k;
};

std::string node_name(std::size_t row, std::size_t column) {
    return "decoder.node" + std::to_string(row) + std::to_string(column);
}

std::size_t node_input_channels(const ArchitectureConfig& cfg, std::size_t row, std::size_t column) {
    const auto& c = cfg.scale_channels;
    const std::size_t same_row = cfg.nest_connections ? column : 1;
    return same_row * c[row - 1] + c[row];
}

// Every conv of the model in a fixed order; init_weights draws random numbers in this order.
std::vector<LayerSpec> layer_specs(const ArchitectureConfig& cfg) {
    const auto& c = cfg.scale_channels;
    const auto k = cfg.kernel;
    std::vector<LayerSpec> specs;
    specs.push_back({"encoder.stem", cfg.stem_channels, 1, k});
    for (std::size_t m = 0; m < kScales; ++m) {
        const std::string block = "encoder.block" + std::to_string(m + 1);
        const std::size_t in = m == 0 ? cfg.stem_channels : c[m - 1];
        specs.push_back({block + ".conv1", c[m], in, k});
        specs.push_back({block + ".conv2", c[m], c[m], k});
    }
    for (std::size_t m = 0; m < kScales; ++m) {
        const std::string rfn = "rfn" + std::to_string(m + 1);
        const std::size_t h = cfg.rfn_hidden_channels[m];
        specs.push_back({rfn + ".conv1", h, c[m], k});
        specs.push_back({rfn + ".conv2", h, c[m], k});
        specs.push_back({rfn + ".conv3", h, 2 * h, k});
        specs.push_back({rfn + ".conv4", h, h, k});
        specs.push_back({rfn + ".conv5", c[m], h, k});
        specs.push_back({rfn + ".conv6", c[m], 2 * c[m], 1});
    }
    for (std::size_t column = 1; column < kScales; ++column) {
        for (std::size_t row = 1; row + column <= kScales; ++row) {
            const std::string node = node_name(row, column);
            specs.push_back({node + ".conv1", c[row - 1], node_input_channels(cfg, row, column), k});
            specs.push_back({node + ".conv2", c[row - 1], c[row - 1], k});
        }
    }
    specs.push_back({"decoder.head", cfg.stem_channels, c[0], k});
    specs.push_back({"decoder.out", 1, cfg.stem_channels, 1});
    return specs;
}

template <typename T>
Var<T> conv(const Var<T>& x, const ModelWeights<T>& w, const std::string& layer) {
    const auto& weight = w.weight(layer);
    const std::size_t k = weight.shape().h();
    return ops::conv2d(x, weight, w.bias(layer), (k - 1) / 2, w.arch().pad_mode);
}

template <typename T>
Var<T> conv_act(const Var<T>& x, const ModelWeights<T>& w, const std::string& layer) {
    return ops::activate(conv(x, w, layer), w.arch().activation);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

ArchitectureConfig ArchitectureConfig::with_widths(std::size_t stem, std::array<std::size_t, kScales> scales) {
    ArchitectureConfig cfg;
    cfg.stem_channels = stem;
    cfg.scale_channels = scales;
    cfg.rfn_hidden_channels = scales;
    return cfg;
}

void ArchitectureConfig::validate() const {
    if (stem_channels == 0) throw ConfigError("architecture: stem_channels must be positive");
    for (std::size_t m = 0; m < kScales; ++m) {
        if (scale_channels[m] == 0 || rfn_hidden_channels[m] == 0) {
            throw ConfigError("architecture: channel counts must be positive");
        }
    }
    if (kernel % 2 == 0) throw ConfigError("architecture: kernel must be odd");
}

ParameterGroup group_of(const std::string& name) {
    if (name.starts_with("encoder.")) return ParameterGroup::encoder;
    if (name.starts_with("rfn")) return ParameterGroup::rfn;
    if (name.starts_with("decoder.")) return ParameterGroup::decoder;
    throw ConfigError("parameter '" + name + "' belongs to no known group");
}

std::size_t decoder_node_inputs(std::size_t row, std::size_t column, bool nest) {
    if (row < 1 || column < 1 || row + column > kScales) throw InputError("no decoder node at that position");
    return (nest ? column : 1) + 1;
}

template <typename T>
ModelWeights<T>::ModelWeights(ArchitectureConfig arch, std::vector<Parameter<T>> params)
    : arch_(arch), params_(std::move(params)) {
    rebuild_index();
}

template <typename T>
ModelWeights<T>::ModelWeights(const ModelWeights& other) : arch_(other.arch_) {
    params_.reserve(other.params_.size());
    for (const auto& p : other.params_) {
        params_.push_back({p.name, Var<T>::leaf(p.value.value(), p.value.requires_grad()), p.trainable});
    }
    rebuild_index();
}

template <typename T>
ModelWeights<T>& ModelWeights<T>::operator=(const ModelWeights& other) {
    if (this != &other) {
        ModelWeights copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T>
void ModelWeights<T>::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!index_.emplace(params_[i].name, i).second) {
            throw ConfigError("duplicate parameter name '" + params_[i].name + "'");
        }
    }
}

template <typename T>
const Parameter<T>& ModelWeights<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return params_[it->second];
}

template <typename T>
Parameter<T>& ModelWeights<T>::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return params_[it->second];
}

template <typename T>
void ModelWeights<T>::set_trainable(ParameterGroup group, bool trainable) {
    for (auto& p : params_) {
        if (group_of(p.name) != group) continue;
        p.trainable = trainable;
        p.value.set_requires_grad(trainable);
        if (!trainable) p.value.zero_grad();
    }
}

template <typename T>
void ModelWeights<T>::set_all_trainable(bool trainable) {
    for (auto g : {ParameterGroup::encoder, ParameterGroup::rfn, ParameterGroup::decoder}) set_trainable(g, trainable);
}

template <typename T>
std::uint64_t ModelWeights<T>::digest(ParameterGroup group) const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& p : params_) {
        if (group_of(p.name) != group) continue;
        h = fnv1a(h, p.name.data(), p.name.size());
        const auto& v = p.value.value();
        h = fnv1a(h, v.raw(), v.size() * sizeof(T));
    }
    return h;
}

template <typename T>
std::size_t ModelWeights<T>::element_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.value().size();
    return total;
}

template <typename T>
ModelWeights<T> init_weights(const ArchitectureConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    std::vector<Parameter<T>> params;
    for (const auto& spec : layer_specs(cfg)) {
        const double fan_in = static_cast<double>(spec.cin * spec.k * spec.k);
        const double bound = std::sqrt(6.0 / fan_in);
        Tensor<T> weight(Shape{spec.cout, spec.cin, spec.k, spec.k});
        for (auto& v : weight.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        params.push_back({spec.name + ".weight", Var<T>::leaf(std::move(weight), true), true});
        params.push_back({spec.name + ".bias", Var<T>::leaf(Tensor<T>(Shape{spec.cout}), true), true});
    }
    return ModelWeights<T>(cfg, std::move(params));
}

template <typename T>
ArchitectureConfig infer_architecture(const std::vector<Parameter<T>>& params, const ArchitectureConfig& base) {
    std::unordered_map<std::string, const Shape*> shapes;
    for (const auto& p : params) shapes[p.name] = &p.value.shape();
    auto dims_of = [&](const std::string& name) -> const Shape& {
        auto it = shapes.find(name);
        if (it == shapes.end()) throw FormatError("checkpoint is missing parameter '" + name + "'");
        if (it->second->rank() != 4 && name.ends_with(".weight")) {
            throw FormatError("parameter '" + name + "' has unexpected rank");
        }
        return *it->second;
    };

    ArchitectureConfig cfg = base;
    const Shape& stem = dims_of("encoder.stem.weight");
    cfg.stem_channels = stem[0];
    cfg.kernel = stem[2];
    for (std::size_t m = 0; m < kScales; ++m) {
        cfg.scale_channels[m] = dims_of("encoder.block" + std::to_string(m + 1) + ".conv2.weight")[0];
        cfg.rfn_hidden_channels[m] = dims_of("rfn" + std::to_string(m + 1) + ".conv1.weight")[0];
    }
    const std::size_t node12_in = dims_of("decoder.node12.conv1.weight")[1];
    cfg.nest_connections = node12_in == 2 * cfg.scale_channels[0] + cfg.scale_channels[1];

    // Every expected tensor must be present with exactly the expected shape.
    const auto specs = layer_specs(cfg);
    if (params.size() != 2 * specs.size()) {
        throw FormatError("checkpoint holds " + std::to_string(params.size()) + " parameters, architecture needs " +
                          std::to_string(2 * specs.size()));
    }
    for (const auto& spec : specs) {
        if (dims_of(spec.name + ".weight") != Shape{spec.cout, spec.cin, spec.k, spec.k} ||
            dims_of(spec.name + ".bias") != Shape{spec.cout}) {
            throw FormatError("parameter '" + spec.name + "' has an inconsistent shape");
        }
    }
    return cfg;
}

template <typename T>
PaddedImage<T> pad_input(const Tensor<T>& img) {
    const Shape& s = img.shape();
    if (s.c() != 1) throw InputError("pad_input: expected a single-channel image, got " + s.str());
    if (s.h() < 16 || s.w() < 16) throw InputError("image " + s.str() + " is smaller than 16x16");
    const std::size_t ph = (s.h() + 15) / 16 * 16, pw = (s.w() + 15) / 16 * 16;
    PaddedImage<T> out{Tensor<T>(Shape{s.n(), 1, ph, pw}), CropRecord{s.h(), s.w(), ph, pw}};
    auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * (n - 1) - i; };
    for (std::size_t b = 0; b < s.n(); ++b) {
        for (std::size_t y = 0; y < ph; ++y) {
            for (std::size_t x = 0; x < pw; ++x) {
                out.image.at(b, 0, y, x) = img.at(b, 0, reflect(y, s.h()), reflect(x, s.w()));
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> crop_output(const Tensor<T>& img, const CropRecord& crop) {
    const Shape& s = img.shape();
    if (s.h() != crop.padded_height || s.w() != crop.padded_width) {
        throw ShapeError("crop_output: image " + s.str() + " does not match the crop record");
    }
    if (crop.is_noop()) return img;
    Tensor<T> out(Shape{s.n(), s.c(), crop.height, crop.width});
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
        for (std::size_t y = 0; y < crop.height; ++y) {
            std::memcpy(out.raw() + (p * crop.height + y) * crop.width, img.raw() + (p * s.h() + y) * s.w(),
                        crop.width * sizeof(T));
        }
    }
    return out;
}

template <typename T>
MultiScaleFeatures<T> encode(const Var<T>& img, const ModelWeights<T>& w) {
    const Shape& s = img.shape();
    if (s.c() != 1) throw ShapeError("encode: expected a single-channel image, got " + s.str());
    if (s.h() % 16 != 0 || s.w() % 16 != 0) throw ShapeError("encode: spatial dims must be multiples of 16, got " + s.str());
    MultiScaleFeatures<T> out;
    Var<T> x = ops::maxpool2(conv_act(img, w, "encoder.stem"));
    for (std::size_t m = 0; m < kScales; ++m) {
        if (m > 0) x = ops::maxpool2(x);
        const std::string block = "encoder.block" + std::to_string(m + 1);
        x = conv_act(conv_act(x, w, block + ".conv1"), w, block + ".conv2");
        out[m] = x;
    }
    return out;
}

template <typename T>
Var<T> rfn_fuse(const Var<T>& phi_ir, const Var<T>& phi_vi, std::size_t m, const ModelWeights<T>& w) {
    if (m >= kScales) throw InputError("rfn_fuse: scale index out of range");
    if (phi_ir.shape() != phi_vi.shape()) {
        throw InputError("rfn_fuse: feature shapes differ " + phi_ir.shape().str() + " vs " + phi_vi.shape().str());
    }
    const std::string rfn = "rfn" + std::to_string(m + 1);
    Var<T> a = conv_act(phi_ir, w, rfn + ".conv1");
    Var<T> b = conv_act(phi_vi, w, rfn + ".conv2");
    Var<T> r = conv_act(ops::concat_channels<T>({a, b}), w, rfn + ".conv3");
    r = conv_act(r, w, rfn + ".conv4");
    r = conv_act(r, w, rfn + ".conv5");
    Var<T> initial = conv_act(ops::concat_channels<T>({phi_ir, phi_vi}), w, rfn + ".conv6");
    return ops::add(r, initial);
}

template <typename T>
Var<T> decode(const MultiScaleFeatures<T>& phi, const ModelWeights<T>& w) {
    const bool nest = w.arch().nest_connections;
    // grid[row][column], rows/columns 0-based here.
    std::array<std::array<Var<T>, kScales>, kScales> grid;
    for (std::size_t m = 0; m < kScales; ++m) grid[m][0] = phi[m];
    for (std::size_t column = 1; column < kScales; ++column) {
        for (std::size_t row = 0; row + column < kScales; ++row) {
            std::vector<Var<T>> inputs;
            if (nest) {
                for (std::size_t j = 0; j < column; ++j) inputs.push_back(grid[row][j]);
            } else {
                inputs.push_back(grid[row][column - 1]);
            }
            inputs.push_back(ops::upsample2(grid[row + 1][column - 1]));
            const std::string node = node_name(row + 1, column);
            Var<T> x = conv_act(ops::concat_channels(inputs), w, node + ".conv1");
            grid[row][column] = conv_act(x, w, node + ".conv2");
        }
    }
    Var<T> head = conv_act(ops::upsample2(grid[0][kScales - 1]), w, "decoder.head");
    return conv(head, w, "decoder.out");
}

template <typename T>
FusionGraph<T> fuse_graph(const Var<T>& ir, const Var<T>& vi, const ModelWeights<T>& w) {
    if (ir.shape() != vi.shape()) {
        throw InputError("fusion inputs differ in shape: " + ir.shape().str() + " vs " + vi.shape().str());
    }
    FusionGraph<T> g;
    g.ir = encode(ir, w);
    g.vi = encode(vi, w);
    for (std::size_t m = 0; m < kScales; ++m) g.fused[m] = rfn_fuse(g.ir[m], g.vi[m], m, w);
    g.output = decode(g.fused, w);
    return g;
}

template <typename T>
Tensor<T> fuse_forward(const ImagePair<T>& pair, const ModelWeights<T>& w) {
    if (pair.ir.shape() != pair.vi.shape()) {
        throw InputError("image pair '" + pair.id + "' has mismatched dims " + pair.ir.shape().str() + " vs " +
                         pair.vi.shape().str());
    }
    NoGradGuard no_grad;
    auto ir = pad_input(pair.ir);
    auto vi = pad_input(pair.vi);
    auto g = fuse_graph(Var<T>::leaf(std::move(ir.image)), Var<T>::leaf(std::move(vi.image)), w);
    return clamp(crop_output(g.output.value(), ir.crop), T{0}, T{1});
}

template <typename T>
Tensor<T> reconstruct(const Tensor<T>& img, const ModelWeights<T>& w) {
    NoGradGuard no_grad;
    auto padded = pad_input(img);
    auto out = decode(encode(Var<T>::leaf(std::move(padded.image)), w), w);
    return clamp(crop_output(out.value(), padded.crop), T{0}, T{1});
}

#define RFN_INSTANTIATE_NETWORKS(T)                                                                     \
    template class ModelWeights<T>;                                                                     \
    template ModelWeights<T> init_weights<T>(const ArchitectureConfig&, std::uint64_t);                 \
    template ArchitectureConfig infer_architecture(const std::vector<Parameter<T>>&, const ArchitectureConfig&); \
    template PaddedImage<T> pad_input(const Tensor<T>&);                                                \
    template Tensor<T> crop_output(const Tensor<T>&, const CropRecord&);                                \
    template MultiScaleFeatures<T> encode(const Var<T>&, const ModelWeights<T>&);                       \
    template Var<T> rfn_fuse(const Var<T>&, const Var<T>&, std::size_t, const ModelWeights<T>&);        \
    template Var<T> decode(const MultiScaleFeatures<T>&, const ModelWeights<T>&);                       \
    template FusionGraph<T> fuse_graph(const Var<T>&, const Var<T>&, const ModelWeights<T>&);           \
    template Tensor<T> fuse_forward(const ImagePair<T>&, const ModelWeights<T>&);                       \
    template Tensor<T> reconstruct(const Tensor<T>&, const ModelWeights<T>&);

RFN_INSTANTIATE_NETWORKS(float)
RFN_INSTANTIATE_NETWORKS(double)

#undef RFN_INSTANTIATE_NETWORKS

}  // namespace rfn
