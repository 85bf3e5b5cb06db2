#include "rfn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rfn {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

Image read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IngestionError("cannot decode PNG '" + path.string() + "': " + png.message);
    }
    const bool colour = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = colour ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw IngestionError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    Image img(png.height, png.width);
    const std::size_t stride = colour ? 4 : 2;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const png_byte* px = buffer.data() + i * stride;
        img.pixels[i] = colour ? luma(px[0] / 255.0, px[1] / 255.0, px[2] / 255.0) : px[0] / 255.0;
    }
    return img;
}

void skip_pnm_space(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open '" + path.string() + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw IngestionError("'" + path.string() + "' is not a PGM file");
    std::size_t w = 0, h = 0, maxval = 0;
    skip_pnm_space(in);
    in >> w;
    skip_pnm_space(in);
    in >> h;
    skip_pnm_space(in);
    in >> maxval;
    if (!in || w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
        throw IngestionError("malformed PGM header in '" + path.string() + "'");
    }
    Image img(h, w);
    if (magic == "P2") {
        for (auto& v : img.pixels) {
            std::size_t raw = 0;
            if (!(in >> raw)) throw IngestionError("truncated PGM '" + path.string() + "'");
            v = static_cast<double>(std::min(raw, maxval)) / static_cast<double>(maxval);
        }
        return img;
    }
    in.get();  // single whitespace before raster
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raster(img.size() * bytes);
    in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (in.gcount() != static_cast<std::streamsize>(raster.size())) {
        throw IngestionError("truncated PGM '" + path.string() + "'");
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
        const std::size_t raw = bytes == 1 ? raster[i] : (std::size_t{raster[2 * i]} << 8) | raster[2 * i + 1];
        img.pixels[i] = static_cast<double>(std::min(raw, maxval)) / static_cast<double>(maxval);
    }
    return img;
}

std::vector<unsigned char> to_bytes(const Image& img) {
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::clamp(std::round(img.pixels[i] * 255.0), 0.0, 255.0));
    }
    return bytes;
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
    const auto ext = lower_extension(path);
    return ext == ".png" || ext == ".pgm";
}

Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw IngestionError("no such image '" + path.string() + "'");
    const auto ext = lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm") return read_pgm(path);
    throw IngestionError("unsupported image format '" + path.string() + "' (expected .png or .pgm)");
}

void write_image(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw InputError("write_image: empty image");
    const auto bytes = to_bytes(img);
    const auto ext = lower_extension(path);
    if (ext == ".png") {
        png_image png{};
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(img.width);
        png.height = static_cast<png_uint_32>(img.height);
        png.format = PNG_FORMAT_GRAY;
        if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
            throw InputError("cannot write PNG '" + path.string() + "': " + png.message);
        }
        return;
    }
    if (ext == ".pgm") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + path.string() + "'");
        out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        return;
    }
    throw InputError("unsupported output format '" + path.string() + "' (expected .png or .pgm)");
}

Image quantize8(const Image& img) {
    Image out = img;
    const auto bytes = to_bytes(img);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = bytes[i] / 255.0;
    return out;
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
    if (img.empty() || height == 0 || width == 0) throw InputError("resize_bilinear: empty image or target");
    if (img.height == height && img.width == width) return img;
    Image out(height, width);
    const double sy = static_cast<double>(img.height) / static_cast<double>(height);
    const double sx = static_cast<double>(img.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width - 1);
            const double tx = fx - static_cast<double>(x0);
            const double top = img.at(y0, x0) * (1 - tx) + img.at(y0, x1) * tx;
            const double bottom = img.at(y1, x0) * (1 - tx) + img.at(y1, x1) * tx;
            out.at(y, x) = top * (1 - ty) + bottom * ty;
        }
    }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, img.width - 1 - x);
    }
    return out;
}

template <typename T>
Tensor<T> to_tensor(const Image& img) {
    std::vector<T> data(img.pixels.begin(), img.pixels.end());
    return Tensor<T>(Shape{1, 1, img.height, img.width}, std::move(data));
}

template <typename T>
Image to_image(const Tensor<T>& t) {
    const Shape& s = t.shape();
    Image img(s.h(), s.w());
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<double>(t[i]);
    return img;
}

template Tensor<float> to_tensor(const Image&);
template Tensor<double> to_tensor(const Image&);
template Image to_image(const Tensor<float>&);
template Image to_image(const Tensor<double>&);

}  // namespace rfn
