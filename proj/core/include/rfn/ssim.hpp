#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rfn {

/// Gaussian-window SSIM constants. Statistics are taken over every fully contained
/// window position ("valid" placement), so images must be at least window x window.
struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;

    [[nodiscard]] double c1() const { return (k1 * data_range) * (k1 * data_range); }
    [[nodiscard]] double c2() const { return (k2 * data_range) * (k2 * data_range); }
};

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(std::size_t size, double sigma);

/// Mean SSIM and mean contrast-structure term over all windows of one plane.
struct SsimStats {
    double ssim = 0.0;
    double cs = 0.0;
};

template <typename T>
SsimStats ssim_plane(std::span<const T> x, std::span<const T> y, std::size_t height, std::size_t width,
                     const SsimOptions& options = {});

namespace detail {

/// Separable "valid" correlation with a symmetric 1-D kernel applied on both axes.
template <typename T>
void filter_valid(const T* in, std::size_t h, std::size_t w, std::span<const double> taps, T* out);

/// Adjoint of filter_valid: scatters an (h-k+1)x(w-k+1) map back onto h x w (accumulates).
template <typename T>
void filter_valid_adjoint(const T* in, std::size_t h, std::size_t w, std::span<const double> taps, T* out);

}  // namespace detail

}  // namespace rfn
