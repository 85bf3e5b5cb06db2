#include "rfn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "rfn/error.hpp"
#include "rfn/random.hpp"

namespace rfn::data {

namespace {

std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IngestionError("corpus directory not found: '" + dir.string() + "'");
    std::map<std::string, std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        const std::string stem = entry.path().stem().string();
        if (!out.emplace(stem, entry.path()).second) {
            throw IngestionError("two images share the stem '" + stem + "' in '" + dir.string() + "'");
        }
    }
    return out;
}

Image load_resized(const std::filesystem::path& path, std::size_t size) {
    Image img = read_image(path);
    return size == 0 ? img : resize_bilinear(img, size, size);
}

}  // namespace

Dataset load_corpus(const std::filesystem::path& root, CorpusMode mode, std::size_t image_size) {
    Dataset ds;
    ds.mode = mode;
    ds.image_size = image_size;
    if (mode == CorpusMode::single) {
        for (const auto& [stem, path] : list_images(root)) {
            ds.ids.push_back(stem);
            ds.images.push_back(load_resized(path, image_size));
        }
        return ds;
    }
    if (!std::filesystem::is_directory(root)) throw IngestionError("corpus directory not found: '" + root.string() + "'");
    const auto ir = list_images(root / "ir");
    const auto vi = list_images(root / "vi");
    for (const auto& [stem, path] : ir) {
        if (!vi.contains(stem)) throw IngestionError("infrared image without visible counterpart: '" + path.string() + "'");
    }
    for (const auto& [stem, path] : vi) {
        if (!ir.contains(stem)) throw IngestionError("visible image without infrared counterpart: '" + path.string() + "'");
    }
    for (const auto& [stem, path] : ir) {
        ds.ids.push_back(stem);
        ds.ir.push_back(load_resized(path, image_size));
        ds.vi.push_back(load_resized(vi.at(stem), image_size));
    }
    return ds;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed + epoch);
    rng.shuffle(order);
    return order;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    return (n + batch_size - 1) / batch_size;
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step) {
    if (n == 0) throw IngestionError("cannot draw batches from an empty dataset");
    const std::size_t per_epoch = steps_per_epoch(n, batch_size);
    const std::size_t epoch = step / per_epoch;
    const std::size_t first = (step % per_epoch) * batch_size;
    const auto order = epoch_order(n, seed, epoch);
    const std::size_t last = std::min(first + batch_size, n);
    return {order.begin() + static_cast<std::ptrdiff_t>(first), order.begin() + static_cast<std::ptrdiff_t>(last)};
}

template <typename T>
Tensor<T> make_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices) {
    std::vector<Tensor<T>> items;
    items.reserve(indices.size());
    for (std::size_t i : indices) items.push_back(to_tensor<T>(images.at(i)));
    return stack_batch<T>(items);
}

template <typename T>
ImagePair<T> make_pair(const Dataset& paired, std::size_t index) {
    if (paired.mode != CorpusMode::paired) throw UsageError("make_pair needs a paired dataset");
    return {to_tensor<T>(paired.ir.at(index)), to_tensor<T>(paired.vi.at(index)), paired.ids.at(index)};
}

SynthPair synth_pair(std::size_t size, std::uint64_t seed) {
    Rng rng(seed);
    const double s = static_cast<double>(size);

    struct Rect {
        double y0, x0, y1, x1, level;
    };
    struct Blob {
        double cy, cx, radius, heat;
    };
    const double gy = rng.uniform(-1.0, 1.0), gx = rng.uniform(-1.0, 1.0);
    std::vector<Rect> rects(2 + rng.below(3));
    for (auto& r : rects) {
        const double h = rng.uniform(0.15, 0.45) * s, w = rng.uniform(0.15, 0.45) * s;
        r.y0 = rng.uniform(0.0, s - h);
        r.x0 = rng.uniform(0.0, s - w);
        r.y1 = r.y0 + h;
        r.x1 = r.x0 + w;
        r.level = rng.uniform(-0.3, 0.3);
    }
    std::vector<Blob> blobs(1 + rng.below(3));
    for (auto& b : blobs) {
        b.cy = rng.uniform(0.15, 0.85) * s;
        b.cx = rng.uniform(0.15, 0.85) * s;
        b.radius = rng.uniform(0.04, 0.1) * s;
        b.heat = rng.uniform(0.5, 0.8);
    }
    const double freq_y = rng.uniform(0.2, 0.6), freq_x = rng.uniform(0.2, 0.6), phase = rng.uniform(0.0, 6.28);

    SynthPair out{Image(size, size), Image(size, size)};
    for (std::size_t yi = 0; yi < size; ++yi) {
        for (std::size_t xi = 0; xi < size; ++xi) {
            const double y = static_cast<double>(yi) + 0.5, x = static_cast<double>(xi) + 0.5;
            const double ramp = 0.5 * (gy * (y / s - 0.5) + gx * (x / s - 0.5));
            double structure = 0.0;
            for (const auto& r : rects) {
                if (y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1) structure += r.level;
            }
            double heat = 0.0;
            for (const auto& b : blobs) {
                const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
                heat += b.heat * std::exp(-d2 / (2.0 * b.radius * b.radius));
            }
            const double texture = 0.08 * std::sin(freq_y * y + freq_x * x + phase);
            const double vi = 0.45 + ramp + structure + texture + 0.05 * heat + 0.03 * rng.normal();
            const double ir = 0.15 + 0.3 * ramp + 0.25 * structure + heat + 0.02 * rng.normal();
            out.vi.at(yi, xi) = std::clamp(vi, 0.0, 1.0);
            out.ir.at(yi, xi) = std::clamp(ir, 0.0, 1.0);
        }
    }
    return out;
}

void write_synthetic_corpus(const std::filesystem::path& root, const SynthConfig& cfg) {
    if (cfg.count == 0 || cfg.size == 0) throw ConfigError("synthetic corpus needs positive count and size");
    for (const char* sub : {"ir", "vi", "auto"}) std::filesystem::create_directories(root / sub);
    Rng seeds(cfg.seed);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        const SynthPair p = synth_pair(cfg.size, seeds.next());
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.png", i);
        write_image(p.ir, root / "ir" / name);
        write_image(p.vi, root / "vi" / name);
        write_image(p.ir, root / "auto" / ("ir_" + std::string(name)));
        write_image(p.vi, root / "auto" / ("vi_" + std::string(name)));
    }
}

template Tensor<float> make_batch(const std::vector<Image>&, const std::vector<std::size_t>&);
template Tensor<double> make_batch(const std::vector<Image>&, const std::vector<std::size_t>&);
template ImagePair<float> make_pair(const Dataset&, std::size_t);
template ImagePair<double> make_pair(const Dataset&, std::size_t);

}  // namespace rfn::data
