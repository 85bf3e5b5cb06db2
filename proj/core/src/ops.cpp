#include "rfn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>

namespace rfn {

namespace testing {
namespace {
std::atomic<Fault> g_fault{Fault::none};
}
void set_fault(Fault fault) noexcept { g_fault.store(fault); }
Fault current_fault() noexcept { return g_fault.load(); }
}  // namespace testing

namespace ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

// Source coordinate for each (tap, output position) pair along one axis; -1 reads zero.
std::vector<std::ptrdiff_t> tap_table(std::size_t k, std::size_t out, std::size_t in, std::size_t pad, PadMode mode) {
    std::vector<std::ptrdiff_t> table(k * out);
    const auto n = static_cast<std::ptrdiff_t>(in);
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t o = 0; o < out; ++o) {
            auto src = static_cast<std::ptrdiff_t>(o + t) - static_cast<std::ptrdiff_t>(pad);
            if (src < 0 || src >= n) src = mode == PadMode::zero ? -1 : reflect_index(src, n);
            table[t * out + o] = src;
        }
    }
    return table;
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, k, pad, ho, wo;
    std::vector<std::ptrdiff_t> rows, cols;
    [[nodiscard]] bool pointwise() const { return k == 1 && pad == 0; }
    [[nodiscard]] std::size_t patch() const { return cin * k * k; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
    const std::size_t hw_out = g.ho * g.wo;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
        const T* plane = x + ci * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                T* dst = col + ((ci * g.k + ky) * g.k + kx) * hw_out;
                const auto* ctab = g.cols.data() + kx * g.wo;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto sy = g.rows[ky * g.ho + oy];
                    T* d = dst + oy * g.wo;
                    if (sy < 0) {
                        std::fill(d, d + g.wo, T{0});
                        continue;
                    }
                    const T* src = plane + sy * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto sx = ctab[ox];
                        d[ox] = sx < 0 ? T{0} : src[sx];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
    const std::size_t hw_out = g.ho * g.wo;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
        T* plane = dx + ci * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const T* src = col + ((ci * g.k + ky) * g.k + kx) * hw_out;
                const auto* ctab = g.cols.data() + kx * g.wo;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto sy = g.rows[ky * g.ho + oy];
                    if (sy < 0) continue;
                    T* d = plane + sy * g.w;
                    const T* s = src + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto sx = ctab[ox];
                        if (sx >= 0) d[sx] += s[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t padding, PadMode mode) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (ws.rank() != 4) throw ShapeError("conv2d: weight must be rank 4, got " + ws.str());
    if (ws.h() != ws.w() || ws.h() % 2 == 0) {
        throw ConfigError("conv2d: kernel must be square with odd size, got " + ws.str());
    }
    if (xs.c() != ws.c()) {
        throw ShapeError("conv2d: input has " + std::to_string(xs.c()) + " channels but weight expects " +
                         std::to_string(ws.c()));
    }
    if (bias.shape() != Shape{ws.n()}) throw ShapeError("conv2d: bias shape " + bias.shape().str());
    const std::size_t k = ws.h();
    if (xs.h() + 2 * padding < k || xs.w() + 2 * padding < k) {
        throw ShapeError("conv2d: input " + xs.str() + " too small for kernel " + std::to_string(k));
    }

    auto geo = std::make_shared<ConvGeometry>();
    geo->n = xs.n();
    geo->cin = xs.c();
    geo->h = xs.h();
    geo->w = xs.w();
    geo->cout = ws.n();
    geo->k = k;
    geo->pad = padding;
    geo->ho = xs.h() + 2 * padding - k + 1;
    geo->wo = xs.w() + 2 * padding - k + 1;
    geo->rows = tap_table(k, geo->ho, geo->h, padding, mode);
    geo->cols = tap_table(k, geo->wo, geo->w, padding, mode);

    const std::size_t hw_in = geo->h * geo->w;
    const std::size_t hw_out = geo->ho * geo->wo;
    const std::size_t patch = geo->patch();

    Tensor<T> out(Shape{geo->n, geo->cout, geo->ho, geo->wo});
    Eigen::Map<const RowMat<T>> wm(weight.value().raw(), geo->cout, patch);
    const T* bptr = bias.value().raw();
    std::vector<T> col(geo->pointwise() ? 0 : patch * hw_out);
    for (std::size_t b = 0; b < geo->n; ++b) {
        const T* xb = x.value().raw() + b * geo->cin * hw_in;
        const T* colp = xb;
        if (!geo->pointwise()) {
            im2col(*geo, xb, col.data());
            colp = col.data();
        }
        Eigen::Map<const RowMat<T>> cm(colp, patch, hw_out);
        Eigen::Map<RowMat<T>> om(out.raw() + b * geo->cout * hw_out, geo->cout, hw_out);
        om.noalias() = wm * cm;
        for (std::size_t co = 0; co < geo->cout; ++co) om.row(co).array() += bptr[co];
    }

    return record<T>("conv2d", std::move(out), {x, weight, bias}, [x, weight, bias, geo](const Tensor<T>& gout) {
        const std::size_t hw_in = geo->h * geo->w;
        const std::size_t hw_out = geo->ho * geo->wo;
        const std::size_t patch = geo->patch();
        Eigen::Map<const RowMat<T>> wm(weight.value().raw(), geo->cout, patch);
        std::vector<T> col(geo->pointwise() ? 0 : patch * hw_out);
        std::vector<T> dcol(geo->pointwise() ? 0 : patch * hw_out);
        T* gw = weight.requires_grad() ? weight.node()->grad_buffer().raw() : nullptr;
        T* gb = bias.requires_grad() ? bias.node()->grad_buffer().raw() : nullptr;
        T* gx = x.requires_grad() ? x.node()->grad_buffer().raw() : nullptr;
        RowMat<T> dw;
        if (gw) dw = RowMat<T>::Zero(geo->cout, patch);
        for (std::size_t b = 0; b < geo->n; ++b) {
            Eigen::Map<const RowMat<T>> gm(gout.raw() + b * geo->cout * hw_out, geo->cout, hw_out);
            const T* xb = x.value().raw() + b * geo->cin * hw_in;
            if (gw) {
                const T* colp = xb;
                if (!geo->pointwise()) {
                    im2col(*geo, xb, col.data());
                    colp = col.data();
                }
                Eigen::Map<const RowMat<T>> cm(colp, patch, hw_out);
                dw.noalias() += gm * cm.transpose();
            }
            if (gb) {
                // Plain loop: Eigen's vectorised redux peels by address, which breaks
                // run-to-run reproducibility.
                const T* gp = gout.raw() + b * geo->cout * hw_out;
                for (std::size_t co = 0; co < geo->cout; ++co) {
                    T acc{0};
                    for (std::size_t i = 0; i < hw_out; ++i) acc += gp[co * hw_out + i];
                    gb[co] += acc;
                }
            }
            if (gx) {
                T* gxb = gx + b * geo->cin * hw_in;
                if (geo->pointwise()) {
                    Eigen::Map<RowMat<T>> dxm(gxb, geo->cin, hw_in);
                    dxm.noalias() += wm.transpose() * gm;
                } else {
                    Eigen::Map<RowMat<T>> dcm(dcol.data(), patch, hw_out);
                    dcm.noalias() = wm.transpose() * gm;
                    col2im(*geo, dcol.data(), gxb);
                }
            }
        }
        if (gw) {
            if (testing::current_fault() == testing::Fault::conv2d_backward) dw *= T(1.05);
            Eigen::Map<RowMat<T>> gwm(gw, geo->cout, patch);
            gwm += dw;
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = v > T{0} ? v : T{0};
    return record<T>("relu", std::move(out), {x}, [x](const Tensor<T>& gout) {
        auto& gx = x.node()->grad_buffer();
        const auto& xv = x.value();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > T{0}) gx[i] += gout[i];
        }
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = v > T{0} ? v : slope * v;
    return record<T>("leaky_relu", std::move(out), {x}, [x, slope](const Tensor<T>& gout) {
        auto& gx = x.node()->grad_buffer();
        const auto& xv = x.value();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xv[i] > T{0} ? gout[i] : slope * gout[i];
    });
}

template <typename T>
Var<T> maxpool2(const Var<T>& x) {
    const Shape& s = x.shape();
    if (s.h() % 2 != 0 || s.w() % 2 != 0) throw ShapeError("maxpool2: spatial dims must be even, got " + s.str());
    const std::size_t ho = s.h() / 2, wo = s.w() / 2, planes = s.n() * s.c();
    Tensor<T> out(Shape{s.n(), s.c(), ho, wo});
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
    const T* in = x.value().raw();
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = in + p * s.h() * s.w();
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::size_t base = 2 * oy * s.w() + 2 * ox;
                const std::size_t cand[4] = {base, base + 1, base + s.w(), base + s.w() + 1};
                std::size_t best = cand[0];
                for (int i = 1; i < 4; ++i) {
                    if (src[cand[i]] > src[best]) best = cand[i];
                }
                const std::size_t o = (p * ho + oy) * wo + ox;
                out[o] = src[best];
                (*argmax)[o] = static_cast<std::uint32_t>(p * s.h() * s.w() + best);
            }
        }
    }
    return record<T>("maxpool2", std::move(out), {x}, [x, argmax](const Tensor<T>& gout) {
        auto& gx = x.node()->grad_buffer();
        for (std::size_t o = 0; o < gout.size(); ++o) gx[(*argmax)[o]] += gout[o];
    });
}

template <typename T>
Var<T> upsample2(const Var<T>& x) {
    const Shape& s = x.shape();
    const std::size_t h = s.h(), w = s.w(), planes = s.n() * s.c();
    Tensor<T> out(Shape{s.n(), s.c(), 2 * h, 2 * w});
    const T* in = x.value().raw();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
            const T* src = in + (p * h + y / 2) * w;
            T* dst = out.raw() + (p * 2 * h + y) * 2 * w;
            for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
        }
    }
    return record<T>("upsample2", std::move(out), {x}, [x, h, w, planes](const Tensor<T>& gout) {
        T* gx = x.node()->grad_buffer().raw();
        for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t y = 0; y < 2 * h; ++y) {
                const T* src = gout.raw() + (p * 2 * h + y) * 2 * w;
                T* dst = gx + (p * h + y / 2) * w;
                for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
            }
        }
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels of an empty list");
    if (xs.size() == 1) return xs.front();
    const Shape& s0 = xs.front().shape();
    std::size_t channels = 0;
    for (const auto& v : xs) {
        const Shape& s = v.shape();
        if (s.n() != s0.n() || s.h() != s0.h() || s.w() != s0.w()) {
            throw ShapeError("concat_channels: " + s.str() + " does not match " + s0.str());
        }
        channels += s.c();
    }
    const std::size_t hw = s0.h() * s0.w();
    Tensor<T> out(Shape{s0.n(), channels, s0.h(), s0.w()});
    for (std::size_t b = 0; b < s0.n(); ++b) {
        T* dst = out.raw() + b * channels * hw;
        for (const auto& v : xs) {
            const std::size_t chunk = v.shape().c() * hw;
            std::memcpy(dst, v.value().raw() + b * chunk, chunk * sizeof(T));
            dst += chunk;
        }
    }
    return record<T>("concat_channels", std::move(out), xs, [xs, channels, hw](const Tensor<T>& gout) {
        const std::size_t n = gout.shape().n();
        std::size_t offset = 0;
        for (const auto& v : xs) {
            const std::size_t chunk = v.shape().c() * hw;
            if (v.requires_grad()) {
                T* gx = v.node()->grad_buffer().raw();
                for (std::size_t b = 0; b < n; ++b) {
                    const T* src = gout.raw() + b * channels * hw + offset;
                    T* dst = gx + b * chunk;
                    for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                }
            }
            offset += chunk;
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return record<T>("add", std::move(out), {a, b}, [a, b](const Tensor<T>& gout) {
        for (const auto* v : {&a, &b}) {
            if (!v->requires_grad()) continue;
            auto& g = v->node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return record<T>("sub", std::move(out), {a, b}, [a, b](const Tensor<T>& gout) {
        if (a.requires_grad()) {
            auto& g = a.node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
        }
        if (b.requires_grad()) {
            auto& g = b.node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gout[i];
        }
    });
}

template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = scale * v + shift;
    return record<T>("affine", std::move(out), {x}, [x, scale](const Tensor<T>& gout) {
        auto& g = x.node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * gout[i];
    });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    T total{0};
    for (T v : x.value().data()) total += v;
    return record<T>("sum", Tensor<T>::scalar(total), {x}, [x](const Tensor<T>& gout) {
        auto& g = x.node()->grad_buffer();
        for (auto& v : g.data()) v += gout[0];
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    const T count = static_cast<T>(x.value().size());
    T total{0};
    for (T v : x.value().data()) total += v;
    return record<T>("mean", Tensor<T>::scalar(total / count), {x}, [x, count](const Tensor<T>& gout) {
        auto& g = x.node()->grad_buffer();
        const T d = gout[0] / count;
        for (auto& v : g.data()) v += d;
    });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
    require_same_shape(x.shape(), weights.shape(), "weighted_sum");
    T total{0};
    for (std::size_t i = 0; i < weights.size(); ++i) total += x.value()[i] * weights[i];
    return record<T>("weighted_sum", Tensor<T>::scalar(total), {x}, [x, weights](const Tensor<T>& gout) {
        auto& g = x.node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[0] * weights[i];
    });
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mse");
    const T count = static_cast<T>(a.value().size());
    T total{0};
    for (std::size_t i = 0; i < a.value().size(); ++i) {
        const T d = a.value()[i] - b.value()[i];
        total += d * d;
    }
    return record<T>("mse", Tensor<T>::scalar(total / count), {a, b}, [a, b, count](const Tensor<T>& gout) {
        const T s = T{2} * gout[0] / count;
        const auto& av = a.value();
        const auto& bv = b.value();
        if (a.requires_grad()) {
            auto& g = a.node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (av[i] - bv[i]);
        }
        if (b.requires_grad()) {
            auto& g = b.node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s * (av[i] - bv[i]);
        }
    });
}

#define RFN_INSTANTIATE_OPS(T)                                                                      \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, PadMode);      \
    template Var<T> relu(const Var<T>&);                                                            \
    template Var<T> leaky_relu(const Var<T>&, T);                                                   \
    template Var<T> maxpool2(const Var<T>&);                                                        \
    template Var<T> upsample2(const Var<T>&);                                                       \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                                    \
    template Var<T> add(const Var<T>&, const Var<T>&);                                              \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                              \
    template Var<T> affine(const Var<T>&, T, T);                                                    \
    template Var<T> sum(const Var<T>&);                                                             \
    template Var<T> mean(const Var<T>&);                                                            \
    template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);                                  \
    template Var<T> mse(const Var<T>&, const Var<T>&);

RFN_INSTANTIATE_OPS(float)
RFN_INSTANTIATE_OPS(double)

#undef RFN_INSTANTIATE_OPS

}  // namespace ops
}  // namespace rfn
