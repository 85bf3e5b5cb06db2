#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfn/image.hpp"
#include "rfn/networks.hpp"

namespace rfn::data {

/// single: `<root>/*.png|pgm`. paired: `<root>/ir/*` and `<root>/vi/*` with matching stems.
enum class CorpusMode { single, paired };

struct Dataset {
    CorpusMode mode = CorpusMode::single;
    std::size_t image_size = 0;  // 0: native sizes
    std::vector<std::string> ids;  // filename stems, sorted
    std::vector<Image> images;     // single mode
    std::vector<Image> ir;         // paired mode
    std::vector<Image> vi;         // paired mode

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    [[nodiscard]] bool empty() const noexcept { return ids.empty(); }
};

/// Decodes, converts to gray, resizes to image_size x image_size (0 keeps native
/// dimensions). A missing root or an unpaired file raises IngestionError naming the
/// path. An empty directory yields an empty dataset.
Dataset load_corpus(const std::filesystem::path& root, CorpusMode mode, std::size_t image_size);

/// Sample order for one epoch: 0..n-1 shuffled with seed + epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Indices of global step `step` under sequential batching of the per-epoch order.
/// The final batch of an epoch may be short.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step);

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);

/// (B,1,H,W) stack of the selected images.
template <typename T>
Tensor<T> make_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices);

template <typename T>
ImagePair<T> make_pair(const Dataset& paired, std::size_t index);

/// Synthetic scenes. Each scene has a smooth background, a few rectangles and a few
/// warm gaussian "targets". The infrared view shows the targets bright over a dim,
/// low-contrast background; the visible view shows the rectangles, a sinusoidal
/// texture and noise, with targets barely visible. Everything derives from the seed.
struct SynthConfig {
    std::size_t count = 16;
    std::size_t size = 64;
    std::uint64_t seed = 7;
};

struct SynthPair {
    Image ir;
    Image vi;
};

SynthPair synth_pair(std::size_t size, std::uint64_t seed);

/// Writes `<root>/ir/NNN.png`, `<root>/vi/NNN.png` for `count` scenes and
/// `<root>/auto/NNN.png` holding 2*count single images (both views of every scene).
void write_synthetic_corpus(const std::filesystem::path& root, const SynthConfig& cfg);

}  // namespace rfn::data
