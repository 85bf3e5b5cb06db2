#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "rfn/tensor.hpp"

namespace rfn {

/// Grayscale image with intensities in [0, 1], row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

    double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    [[nodiscard]] double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    [[nodiscard]] std::size_t size() const noexcept { return pixels.size(); }
    [[nodiscard]] bool empty() const noexcept { return pixels.empty(); }
};

/// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
constexpr double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// Decodes PNG (gray or colour, alpha ignored) or PGM (P2/P5). Colour is converted with luma().
/// Throws IngestionError naming the path on failure.
Image read_image(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG or binary PGM (chosen by extension), storing round(v*255)
/// clamped to [0, 255].
void write_image(const Image& img, const std::filesystem::path& path);

/// Quantises to the 8-bit grid written by write_image.
Image quantize8(const Image& img);

/// Half-pixel-centred bilinear resampling.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

Image flip_horizontal(const Image& img);

bool is_image_file(const std::filesystem::path& path);

/// (1,1,H,W) tensor.
template <typename T>
Tensor<T> to_tensor(const Image& img);

/// Sample 0, channel 0 of a rank-4 tensor.
template <typename T>
Image to_image(const Tensor<T>& t);

}  // namespace rfn
