#include "rfn/strategies.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace rfn::strategy {

namespace {

template <typename T>
void require_pair(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": feature shapes differ " + a.shape().str() + " vs " + b.shape().str());
    }
    if (a.shape().rank() != 4) throw ShapeError(std::string(what) + ": expected rank-4 features");
}

double ratio(double num, double den) { return den == 0.0 ? 0.5 : num / den; }

// Per-pixel channel l1-norm, shape (N,1,H,W) in double.
template <typename T>
std::vector<double> activity(const Tensor<T>& x) {
    const Shape& s = x.shape();
    const std::size_t hw = s.h() * s.w();
    std::vector<double> act(s.n() * hw, 0.0);
    for (std::size_t n = 0; n < s.n(); ++n) {
        for (std::size_t c = 0; c < s.c(); ++c) {
            const T* plane = x.raw() + (n * s.c() + c) * hw;
            double* dst = act.data() + n * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] += std::abs(static_cast<double>(plane[i]));
        }
    }
    return act;
}

std::vector<double> box_average(const std::vector<double>& act, std::size_t n, std::size_t h, std::size_t w,
                                std::size_t radius) {
    if (radius == 0) return act;
    std::vector<double> out(act.size());
    const auto r = static_cast<std::ptrdiff_t>(radius);
    for (std::size_t b = 0; b < n; ++b) {
        const double* src = act.data() + b * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double total = 0.0;
                std::size_t count = 0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
                        if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
                        total += src[yy * static_cast<std::ptrdiff_t>(w) + xx];
                        ++count;
                    }
                }
                out[b * h * w + y * w + x] = total / static_cast<double>(count);
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> spatial_weights(const Tensor<T>& a, const Tensor<T>& b, std::size_t radius) {
    const Shape& s = a.shape();
    const auto act_a = box_average(activity(a), s.n(), s.h(), s.w(), radius);
    const auto act_b = box_average(activity(b), s.n(), s.h(), s.w(), radius);
    Tensor<T> wa(Shape{s.n(), 1, s.h(), s.w()});
    for (std::size_t i = 0; i < wa.size(); ++i) wa[i] = static_cast<T>(ratio(act_a[i], act_a[i] + act_b[i]));
    return wa;
}

// out = wa * a + (1 - wa) * b with wa broadcast over channels.
template <typename T>
Tensor<T> blend_spatial(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& wa) {
    const Shape& s = a.shape();
    const std::size_t hw = s.h() * s.w();
    Tensor<T> out(s);
    for (std::size_t n = 0; n < s.n(); ++n) {
        const T* wp = wa.raw() + n * hw;
        for (std::size_t c = 0; c < s.c(); ++c) {
            const std::size_t off = (n * s.c() + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) out[off + i] = wp[i] * a[off + i] + (T{1} - wp[i]) * b[off + i];
        }
    }
    return out;
}

// out(c) = wa(c) * a(c) + (1 - wa(c)) * b(c).
template <typename T>
Tensor<T> blend_channel(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& wa) {
    const Shape& s = a.shape();
    const std::size_t hw = s.h() * s.w();
    Tensor<T> out(s);
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
        const T wp = wa[p];
        for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] = wp * a[p * hw + i] + (T{1} - wp) * b[p * hw + i];
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> fuse_add(const Tensor<T>& a, const Tensor<T>& b) {
    require_pair(a, b, "fuse_add");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <typename T>
Tensor<T> fuse_max(const Tensor<T>& a, const Tensor<T>& b) {
    require_pair(a, b, "fuse_max");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], b[i]);
    return out;
}

template <typename T>
Tensor<T> l1norm_weights(const Tensor<T>& a, const Tensor<T>& b, std::size_t radius) {
    require_pair(a, b, "fuse_l1norm");
    return spatial_weights(a, b, radius);
}

template <typename T>
Tensor<T> fuse_l1norm(const Tensor<T>& a, const Tensor<T>& b, std::size_t radius) {
    return blend_spatial(a, b, l1norm_weights(a, b, radius));
}

double nuclear_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols) {
    if (matrix.size() != rows * cols) throw ShapeError("nuclear_norm: matrix size mismatch");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        matrix.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    if (svd.info() != Eigen::Success) throw NumericError("nuclear_norm: SVD did not converge");
    const double total = svd.singularValues().sum();
    if (!std::isfinite(total)) throw NumericError("nuclear_norm: non-finite singular values");
    return total;
}

template <typename T>
Tensor<T> nuclear_weights(const Tensor<T>& a, const Tensor<T>& b) {
    require_pair(a, b, "fuse_nuclear");
    const Shape& s = a.shape();
    const std::size_t hw = s.h() * s.w();
    Tensor<T> wa(Shape{s.n(), s.c(), 1, 1});
    std::vector<double> plane(hw);
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
        std::copy(a.raw() + p * hw, a.raw() + (p + 1) * hw, plane.begin());
        const double na = nuclear_norm(plane, s.h(), s.w());
        std::copy(b.raw() + p * hw, b.raw() + (p + 1) * hw, plane.begin());
        const double nb = nuclear_norm(plane, s.h(), s.w());
        wa[p] = static_cast<T>(ratio(na, na + nb));
    }
    return wa;
}

template <typename T>
Tensor<T> fuse_nuclear(const Tensor<T>& a, const Tensor<T>& b) {
    return blend_channel(a, b, nuclear_weights(a, b));
}

template <typename T>
Tensor<T> channel_weights(const Tensor<T>& a, const Tensor<T>& b) {
    require_pair(a, b, "fuse_sca");
    const Shape& s = a.shape();
    const std::size_t hw = s.h() * s.w();
    Tensor<T> wa(Shape{s.n(), s.c(), 1, 1});
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
        double pa = 0.0, pb = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            pa += a[p * hw + i];
            pb += b[p * hw + i];
        }
        pa /= static_cast<double>(hw);
        pb /= static_cast<double>(hw);
        wa[p] = static_cast<T>(ratio(pa, pa + pb));
    }
    return wa;
}

template <typename T>
Tensor<T> fuse_sca(const Tensor<T>& a, const Tensor<T>& b) {
    require_pair(a, b, "fuse_sca");
    const Tensor<T> spatial = blend_spatial(a, b, spatial_weights(a, b, 0));
    const Tensor<T> channel = blend_channel(a, b, channel_weights(a, b));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (spatial[i] + channel[i]) / T{2};
    return out;
}

template <typename T>
Tensor<T> apply(StrategyKind kind, const Tensor<T>& a, const Tensor<T>& b) {
    switch (kind) {
        case StrategyKind::add: return fuse_add(a, b);
        case StrategyKind::max: return fuse_max(a, b);
        case StrategyKind::l1_norm: return fuse_l1norm(a, b);
        case StrategyKind::nuclear_norm: return fuse_nuclear(a, b);
        case StrategyKind::sca: return fuse_sca(a, b);
    }
    throw ConfigError("unknown strategy");
}

FusionMethod parse_fusion_method(std::string_view name) {
    if (name == "rfn") return FusionMethod::rfn;
    if (name == "add") return FusionMethod::add;
    if (name == "max") return FusionMethod::max;
    if (name == "l1") return FusionMethod::l1;
    if (name == "nuclear") return FusionMethod::nuclear;
    if (name == "sca") return FusionMethod::sca;
    throw ConfigError("unknown fusion strategy '" + std::string(name) + "' (expected rfn, add, max, l1, nuclear or sca)");
}

std::string to_string(FusionMethod method) {
    switch (method) {
        case FusionMethod::rfn: return "rfn";
        case FusionMethod::add: return "add";
        case FusionMethod::max: return "max";
        case FusionMethod::l1: return "l1";
        case FusionMethod::nuclear: return "nuclear";
        case FusionMethod::sca: return "sca";
    }
    return "?";
}

template <typename T>
Tensor<T> fuse_with(const ImagePair<T>& pair, const ModelWeights<T>& w, FusionMethod method) {
    if (method == FusionMethod::rfn) return fuse_forward(pair, w);
    if (pair.ir.shape() != pair.vi.shape()) {
        throw InputError("image pair '" + pair.id + "' has mismatched dims " + pair.ir.shape().str() + " vs " +
                         pair.vi.shape().str());
    }
    StrategyKind kind = StrategyKind::add;
    switch (method) {
        case FusionMethod::add: kind = StrategyKind::add; break;
        case FusionMethod::max: kind = StrategyKind::max; break;
        case FusionMethod::l1: kind = StrategyKind::l1_norm; break;
        case FusionMethod::nuclear: kind = StrategyKind::nuclear_norm; break;
        case FusionMethod::sca: kind = StrategyKind::sca; break;
        case FusionMethod::rfn: break;
    }
    NoGradGuard no_grad;
    auto ir = pad_input(pair.ir);
    auto vi = pad_input(pair.vi);
    const auto phi_ir = encode(Var<T>::leaf(std::move(ir.image)), w);
    const auto phi_vi = encode(Var<T>::leaf(std::move(vi.image)), w);
    MultiScaleFeatures<T> fused;
    for (std::size_t m = 0; m < kScales; ++m) {
        fused[m] = Var<T>::leaf(apply(kind, phi_ir[m].value(), phi_vi[m].value()));
    }
    return clamp(crop_output(decode(fused, w).value(), ir.crop), T{0}, T{1});
}

#define RFN_INSTANTIATE_STRATEGIES(T)                                                     \
    template Tensor<T> fuse_add(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> fuse_max(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> l1norm_weights(const Tensor<T>&, const Tensor<T>&, std::size_t);   \
    template Tensor<T> fuse_l1norm(const Tensor<T>&, const Tensor<T>&, std::size_t);      \
    template Tensor<T> nuclear_weights(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> fuse_nuclear(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> channel_weights(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> fuse_sca(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> apply(StrategyKind, const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> fuse_with(const ImagePair<T>&, const ModelWeights<T>&, FusionMethod);

RFN_INSTANTIATE_STRATEGIES(float)
RFN_INSTANTIATE_STRATEGIES(double)

#undef RFN_INSTANTIATE_STRATEGIES

}  // namespace rfn::strategy
