#include "rfn/ssim.hpp"

#include <cmath>

#include "rfn/error.hpp"

namespace rfn {

std::vector<double> gaussian_taps(std::size_t size, double sigma) {
    if (size == 0 || size % 2 == 0) throw ConfigError("SSIM window must be odd and positive");
    if (!(sigma > 0)) throw ConfigError("SSIM sigma must be positive");
    std::vector<double> taps(size);
    const double centre = static_cast<double>(size / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - centre;
        taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        total += taps[i];
    }
    for (auto& t : taps) t /= total;
    return taps;
}

namespace detail {

template <typename T>
void filter_valid(const T* in, std::size_t h, std::size_t w, std::span<const double> taps, T* out) {
    const std::size_t k = taps.size();
    const std::size_t ho = h - k + 1, wo = w - k + 1;
    std::vector<T> rows(h * wo);
    for (std::size_t y = 0; y < h; ++y) {
        const T* src = in + y * w;
        T* dst = rows.data() + y * wo;
        for (std::size_t x = 0; x < wo; ++x) {
            T acc{0};
            for (std::size_t t = 0; t < k; ++t) acc += static_cast<T>(taps[t]) * src[x + t];
            dst[x] = acc;
        }
    }
    for (std::size_t y = 0; y < ho; ++y) {
        T* dst = out + y * wo;
        for (std::size_t x = 0; x < wo; ++x) dst[x] = T{0};
        for (std::size_t t = 0; t < k; ++t) {
            const T tap = static_cast<T>(taps[t]);
            const T* src = rows.data() + (y + t) * wo;
            for (std::size_t x = 0; x < wo; ++x) dst[x] += tap * src[x];
        }
    }
}

template <typename T>
void filter_valid_adjoint(const T* in, std::size_t h, std::size_t w, std::span<const double> taps, T* out) {
    const std::size_t k = taps.size();
    const std::size_t ho = h - k + 1, wo = w - k + 1;
    std::vector<T> rows(h * wo, T{0});
    for (std::size_t y = 0; y < ho; ++y) {
        const T* src = in + y * wo;
        for (std::size_t t = 0; t < k; ++t) {
            const T tap = static_cast<T>(taps[t]);
            T* dst = rows.data() + (y + t) * wo;
            for (std::size_t x = 0; x < wo; ++x) dst[x] += tap * src[x];
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        const T* src = rows.data() + y * wo;
        T* dst = out + y * w;
        for (std::size_t x = 0; x < wo; ++x) {
            for (std::size_t t = 0; t < k; ++t) dst[x + t] += static_cast<T>(taps[t]) * src[x];
        }
    }
}

template void filter_valid(const float*, std::size_t, std::size_t, std::span<const double>, float*);
template void filter_valid(const double*, std::size_t, std::size_t, std::span<const double>, double*);
template void filter_valid_adjoint(const float*, std::size_t, std::size_t, std::span<const double>, float*);
template void filter_valid_adjoint(const double*, std::size_t, std::size_t, std::span<const double>, double*);

}  // namespace detail

template <typename T>
SsimStats ssim_plane(std::span<const T> x, std::span<const T> y, std::size_t height, std::size_t width,
                     const SsimOptions& options) {
    const std::size_t k = options.window;
    if (x.size() != height * width || y.size() != height * width) throw InputError("ssim: plane size mismatch");
    if (height < k || width < k) {
        throw InputError("ssim: image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");
    }
    const auto taps = gaussian_taps(k, options.sigma);
    const std::size_t n = height * width;
    const std::size_t ho = height - k + 1, wo = width - k + 1, q = ho * wo;

    // Statistics in double regardless of T.
    std::vector<double> xd(x.begin(), x.end()), yd(y.begin(), y.end());
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = xd[i] * xd[i];
        yy[i] = yd[i] * yd[i];
        xy[i] = xd[i] * yd[i];
    }
    std::vector<double> mx(q), my(q), exx(q), eyy(q), exy(q);
    detail::filter_valid(xd.data(), height, width, taps, mx.data());
    detail::filter_valid(yd.data(), height, width, taps, my.data());
    detail::filter_valid(xx.data(), height, width, taps, exx.data());
    detail::filter_valid(yy.data(), height, width, taps, eyy.data());
    detail::filter_valid(xy.data(), height, width, taps, exy.data());

    const double c1 = options.c1(), c2 = options.c2();
    double ssim_sum = 0.0, cs_sum = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
        const double sxx = exx[i] - mx[i] * mx[i];
        const double syy = eyy[i] - my[i] * my[i];
        const double sxy = exy[i] - mx[i] * my[i];
        const double cs = (2.0 * sxy + c2) / (sxx + syy + c2);
        const double lum = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    return {ssim_sum / static_cast<double>(q), cs_sum / static_cast<double>(q)};
}

template SsimStats ssim_plane(std::span<const float>, std::span<const float>, std::size_t, std::size_t,
                              const SsimOptions&);
template SsimStats ssim_plane(std::span<const double>, std::span<const double>, std::size_t, std::size_t,
                              const SsimOptions&);

}  // namespace rfn
