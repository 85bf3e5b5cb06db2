#include "rfn/losses.hpp"

#include <cmath>

namespace rfn::loss {

void Stage1LossConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("stage-1 loss: lambda must be >= 0");
}

void Stage2LossConfig::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("stage-2 loss: alpha must be >= 0");
    for (double v : w1) {
        if (!(v >= 0.0)) throw ConfigError("stage-2 loss: w1 entries must be >= 0");
    }
    if (!(w_vi > 0.0)) throw ConfigError("stage-2 loss: w_vi must be > 0");
    if (!(w_ir >= 0.0)) throw ConfigError("stage-2 loss: w_ir must be >= 0");
}

namespace {

// Per-window SSIM statistics for one plane, kept in double.
struct WindowStats {
    std::vector<double> mx, my, exx, eyy, exy;
};

template <typename T>
WindowStats window_stats(const T* x, const T* y, std::size_t h, std::size_t w, std::span<const double> taps) {
    const std::size_t n = h * w, k = taps.size();
    const std::size_t q = (h - k + 1) * (w - k + 1);
    std::vector<double> xd(x, x + n), yd(y, y + n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = xd[i] * xd[i];
        yy[i] = yd[i] * yd[i];
        xy[i] = xd[i] * yd[i];
    }
    WindowStats s{std::vector<double>(q), std::vector<double>(q), std::vector<double>(q), std::vector<double>(q),
                  std::vector<double>(q)};
    detail::filter_valid(xd.data(), h, w, taps, s.mx.data());
    detail::filter_valid(yd.data(), h, w, taps, s.my.data());
    detail::filter_valid(xx.data(), h, w, taps, s.exx.data());
    detail::filter_valid(yy.data(), h, w, taps, s.eyy.data());
    detail::filter_valid(xy.data(), h, w, taps, s.exy.data());
    return s;
}

}  // namespace

template <typename T>
Var<T> ssim(const Var<T>& x, const Var<T>& y, const SsimOptions& options) {
    if (x.shape() != y.shape()) {
        throw InputError("ssim: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
    }
    const Shape& s = x.shape();
    const std::size_t h = s.h(), w = s.w(), planes = s.n() * s.c();
    if (h < options.window || w < options.window) {
        throw InputError("ssim: image " + s.str() + " is smaller than the " + std::to_string(options.window) +
                         "-pixel window");
    }
    const auto taps = std::make_shared<std::vector<double>>(gaussian_taps(options.window, options.sigma));
    const std::size_t q = (h - options.window + 1) * (w - options.window + 1);
    const double c1 = options.c1(), c2 = options.c2();

    double total = 0.0;
    for (std::size_t p = 0; p < planes; ++p) {
        const auto st = window_stats(x.value().raw() + p * h * w, y.value().raw() + p * h * w, h, w, *taps);
        for (std::size_t i = 0; i < q; ++i) {
            const double a1 = 2.0 * st.mx[i] * st.my[i] + c1;
            const double a2 = 2.0 * (st.exy[i] - st.mx[i] * st.my[i]) + c2;
            const double b1 = st.mx[i] * st.mx[i] + st.my[i] * st.my[i] + c1;
            const double b2 = st.exx[i] - st.mx[i] * st.mx[i] + st.eyy[i] - st.my[i] * st.my[i] + c2;
            total += (a1 * a2) / (b1 * b2);
        }
    }
    const double count = static_cast<double>(planes * q);
    auto value = Tensor<T>::scalar(static_cast<T>(total / count));

    return record<T>("ssim", std::move(value), {x, y}, [x, y, taps, h, w, planes, q, c1, c2, count](const Tensor<T>& gout) {
        const double g = static_cast<double>(gout[0]) / count;
        const std::size_t n = h * w;
        std::vector<double> d_mx(q), d_my(q), d_sq(q), d_xy(q);
        std::vector<double> b_mx(n), b_my(n), b_sq(n), b_xy(n);
        T* gx = x.requires_grad() ? x.node()->grad_buffer().raw() : nullptr;
        T* gy = y.requires_grad() ? y.node()->grad_buffer().raw() : nullptr;
        for (std::size_t p = 0; p < planes; ++p) {
            const T* xp = x.value().raw() + p * n;
            const T* yp = y.value().raw() + p * n;
            const auto st = window_stats(xp, yp, h, w, *taps);
            for (std::size_t i = 0; i < q; ++i) {
                const double mx = st.mx[i], my = st.my[i];
                const double a1 = 2.0 * mx * my + c1;
                const double a2 = 2.0 * (st.exy[i] - mx * my) + c2;
                const double b1 = mx * mx + my * my + c1;
                const double b2 = st.exx[i] - mx * mx + st.eyy[i] - my * my + c2;
                const double den = b1 * b2;
                const double s = a1 * a2 / den;
                d_mx[i] = g * (2.0 * my * (a2 - a1) / den - 2.0 * mx * s * (b2 - b1) / den);
                d_my[i] = g * (2.0 * mx * (a2 - a1) / den - 2.0 * my * s * (b2 - b1) / den);
                d_sq[i] = g * (-s / b2);  // same for E[x^2] and E[y^2]
                d_xy[i] = g * (2.0 * a1 / den);
            }
            std::fill(b_sq.begin(), b_sq.end(), 0.0);
            std::fill(b_xy.begin(), b_xy.end(), 0.0);
            detail::filter_valid_adjoint(d_sq.data(), h, w, *taps, b_sq.data());
            detail::filter_valid_adjoint(d_xy.data(), h, w, *taps, b_xy.data());
            if (gx) {
                std::fill(b_mx.begin(), b_mx.end(), 0.0);
                detail::filter_valid_adjoint(d_mx.data(), h, w, *taps, b_mx.data());
                T* gp = gx + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    gp[j] += static_cast<T>(b_mx[j] + 2.0 * xp[j] * b_sq[j] + yp[j] * b_xy[j]);
                }
            }
            if (gy) {
                std::fill(b_my.begin(), b_my.end(), 0.0);
                detail::filter_valid_adjoint(d_my.data(), h, w, *taps, b_my.data());
                T* gp = gy + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    gp[j] += static_cast<T>(b_my[j] + 2.0 * yp[j] * b_sq[j] + xp[j] * b_xy[j]);
                }
            }
        }
    });
}

template <typename T>
Var<T> l_pixel(const Var<T>& out, const Var<T>& inp, bool normalize) {
    if (out.shape() != inp.shape()) {
        throw InputError("l_pixel: shape mismatch " + out.shape().str() + " vs " + inp.shape().str());
    }
    Var<T> m = ops::mse(out, inp);
    if (normalize) return m;
    const T per_sample = static_cast<T>(out.value().size() / out.shape().n());
    return ops::affine(m, per_sample);
}

template <typename T>
Stage1Terms<T> l_auto(const Var<T>& out, const Var<T>& inp, const Stage1LossConfig& cfg) {
    cfg.validate();
    Stage1Terms<T> terms;
    terms.pixel = l_pixel(out, inp, cfg.normalize);
    terms.ssim = ops::affine(ssim(out, inp), T{-1}, T{1});
    terms.total = ops::add(terms.pixel, ops::affine(terms.ssim, static_cast<T>(cfg.lambda)));
    return terms;
}

template <typename T>
Var<T> l_detail(const Var<T>& fused, const Var<T>& visible) {
    return ops::affine(ssim(fused, visible), T{-1}, T{1});
}

template <typename T>
Var<T> l_feature(const MultiScaleFeatures<T>& fused, const MultiScaleFeatures<T>& visible,
                 const MultiScaleFeatures<T>& infrared, const Stage2LossConfig& cfg) {
    cfg.validate();
    Var<T> total;
    for (std::size_t m = 0; m < kScales; ++m) {
        const Shape& s = fused[m].shape();
        if (visible[m].shape() != s || infrared[m].shape() != s) {
            throw InputError("l_feature: scale " + std::to_string(m + 1) + " shapes differ: " + s.str() + ", " +
                             visible[m].shape().str() + ", " + infrared[m].shape().str());
        }
        Var<T> target = ops::add(ops::affine(visible[m], static_cast<T>(cfg.w_vi)),
                                 ops::affine(infrared[m], static_cast<T>(cfg.w_ir)));
        Var<T> residual = l_pixel(fused[m], target, cfg.normalize);
        Var<T> term = ops::affine(residual, static_cast<T>(cfg.w1[m]));
        total = m == 0 ? term : ops::add(total, term);
    }
    return total;
}

template <typename T>
Stage2Terms<T> l_rfn(const Var<T>& fused, const Var<T>& visible, const MultiScaleFeatures<T>& phi_f,
                     const MultiScaleFeatures<T>& phi_vi, const MultiScaleFeatures<T>& phi_ir,
                     const Stage2LossConfig& cfg) {
    cfg.validate();
    Stage2Terms<T> terms;
    terms.detail = l_detail(fused, visible);
    terms.feature = l_feature(phi_f, phi_vi, phi_ir, cfg);
    terms.total = ops::add(ops::affine(terms.detail, static_cast<T>(cfg.alpha)), terms.feature);
    return terms;
}

#define RFN_INSTANTIATE_LOSSES(T)                                                                                  \
    template Var<T> ssim(const Var<T>&, const Var<T>&, const SsimOptions&);                                        \
    template Var<T> l_pixel(const Var<T>&, const Var<T>&, bool);                                                   \
    template Stage1Terms<T> l_auto(const Var<T>&, const Var<T>&, const Stage1LossConfig&);                         \
    template Var<T> l_detail(const Var<T>&, const Var<T>&);                                                        \
    template Var<T> l_feature(const MultiScaleFeatures<T>&, const MultiScaleFeatures<T>&,                          \
                              const MultiScaleFeatures<T>&, const Stage2LossConfig&);                              \
    template Stage2Terms<T> l_rfn(const Var<T>&, const Var<T>&, const MultiScaleFeatures<T>&,                      \
                                  const MultiScaleFeatures<T>&, const MultiScaleFeatures<T>&, const Stage2LossConfig&);

RFN_INSTANTIATE_LOSSES(float)
RFN_INSTANTIATE_LOSSES(double)

#undef RFN_INSTANTIATE_LOSSES

}  // namespace rfn::loss
