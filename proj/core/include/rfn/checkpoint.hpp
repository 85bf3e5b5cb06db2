#pragma once

#include <cstdint>
#include <filesystem>

#include "rfn/networks.hpp"

namespace rfn {

// Binary layout, all integers little-endian:
//
//   "RFNN"            4 bytes magic
//   version           u32 (currently 1)
//   parameter count   u32
//   per parameter:
//     name length u16, UTF-8 name
//     dtype u8        (0 = float32, 1 = float64)
//     rank u8, dims as rank x u32
//     raw little-endian values
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class StorageType : std::uint8_t { float32 = 0, float64 = 1 };

/// Writes every parameter. By default values are stored in the precision of T.
template <typename T>
void save_checkpoint(const ModelWeights<T>& w, const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const ModelWeights<T>& w, const std::filesystem::path& path, StorageType storage);

/// Reads a checkpoint and rebuilds the architecture from parameter shapes; pad mode
/// and activation come from `base`. Throws FormatError on bad magic, unknown version
/// or dtype, truncation (with the byte offset) and inconsistent shapes.
template <typename T>
ModelWeights<T> load_checkpoint(const std::filesystem::path& path, const ArchitectureConfig& base = {});

/// Exact byte size of a checkpoint for the given weights.
template <typename T>
std::uint64_t checkpoint_size(const ModelWeights<T>& w, StorageType storage);

}  // namespace rfn
