#include "rfn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace rfn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'F', 'N', 'N'};

class Writer {
public:
    template <typename U>
    void put(U value) {
        const auto* p = reinterpret_cast<const char*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(U));
    }
    void put_bytes(const void* data, std::size_t len) {
        const auto* p = static_cast<const char*>(data);
        bytes_.insert(bytes_.end(), p, p + len);
    }
    [[nodiscard]] const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class Reader {
public:
    explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    template <typename U>
    U get(const char* what) {
        U value;
        std::memcpy(&value, take(sizeof(U), what), sizeof(U));
        return value;
    }
    const char* take(std::size_t len, const char* what) {
        if (bytes_.size() - pos_ < len) {
            throw FormatError(std::string("checkpoint truncated at offset ") + std::to_string(pos_) + " while reading " +
                              what);
        }
        const char* p = bytes_.data() + pos_;
        pos_ += len;
        return p;
    }
    [[nodiscard]] std::size_t offset() const { return pos_; }
    [[nodiscard]] bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
constexpr StorageType native_storage() {
    return std::is_same_v<T, float> ? StorageType::float32 : StorageType::float64;
}

std::size_t element_bytes(StorageType s) { return s == StorageType::float32 ? 4 : 8; }

}  // namespace

template <typename T>
void save_checkpoint(const ModelWeights<T>& w, const std::filesystem::path& path) {
    save_checkpoint(w, path, native_storage<T>());
}

template <typename T>
void save_checkpoint(const ModelWeights<T>& w, const std::filesystem::path& path, StorageType storage) {
    Writer out;
    out.put_bytes(kMagic, 4);
    out.put<std::uint32_t>(kCheckpointVersion);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(w.params().size()));
    for (const auto& p : w.params()) {
        if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("parameter name too long");
        out.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
        out.put_bytes(p.name.data(), p.name.size());
        out.put<std::uint8_t>(static_cast<std::uint8_t>(storage));
        const auto& dims = p.value.shape().dims();
        out.put<std::uint8_t>(static_cast<std::uint8_t>(dims.size()));
        for (auto d : dims) out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (T v : p.value.value().data()) {
            if (storage == StorageType::float32) {
                out.put<float>(static_cast<float>(v));
            } else {
                out.put<double>(static_cast<double>(v));
            }
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw ConfigError("cannot open '" + path.string() + "' for writing");
    file.write(out.bytes().data(), static_cast<std::streamsize>(out.bytes().size()));
    if (!file) throw ConfigError("failed writing checkpoint '" + path.string() + "'");
}

template <typename T>
ModelWeights<T> load_checkpoint(const std::filesystem::path& path, const ArchitectureConfig& base) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
    Reader in(std::vector<char>(std::istreambuf_iterator<char>(file), {}));

    if (std::memcmp(in.take(4, "magic"), kMagic, 4) != 0) {
        throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic bytes)");
    }
    const auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = in.get<std::uint32_t>("parameter count");
    std::vector<Parameter<T>> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint16_t>("name length");
        std::string name(in.take(name_len, "parameter name"), name_len);
        const auto dtype_offset = in.offset();
        const auto dtype = in.get<std::uint8_t>("dtype");
        if (dtype > 1) {
            throw FormatError("unknown dtype code " + std::to_string(dtype) + " at offset " + std::to_string(dtype_offset));
        }
        const auto storage = static_cast<StorageType>(dtype);
        const auto rank = in.get<std::uint8_t>("rank");
        if (rank == 0) throw FormatError("parameter '" + name + "' has rank 0");
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) {
            d = in.get<std::uint32_t>("dimension");
            if (d == 0) throw FormatError("parameter '" + name + "' has a zero dimension");
        }
        Shape shape(dims);
        std::vector<T> values(shape.numel());
        const char* raw = in.take(values.size() * element_bytes(storage), "parameter values");
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (storage == StorageType::float32) {
                float f;
                std::memcpy(&f, raw + 4 * j, 4);
                values[j] = static_cast<T>(f);
            } else {
                double d;
                std::memcpy(&d, raw + 8 * j, 8);
                values[j] = static_cast<T>(d);
            }
        }
        params.push_back({std::move(name), Var<T>::leaf(Tensor<T>(std::move(shape), std::move(values)), true), true});
    }
    if (!in.at_end()) throw FormatError("trailing bytes after offset " + std::to_string(in.offset()));

    ArchitectureConfig arch = infer_architecture(params, base);
    return ModelWeights<T>(arch, std::move(params));
}

template <typename T>
std::uint64_t checkpoint_size(const ModelWeights<T>& w, StorageType storage) {
    std::uint64_t size = 4 + 4 + 4;
    for (const auto& p : w.params()) {
        size += 2 + p.name.size() + 1 + 1 + 4 * p.value.shape().rank();
        size += element_bytes(storage) * p.value.value().size();
    }
    return size;
}

#define RFN_INSTANTIATE_CHECKPOINT(T)                                                                    \
    template void save_checkpoint(const ModelWeights<T>&, const std::filesystem::path&);                 \
    template void save_checkpoint(const ModelWeights<T>&, const std::filesystem::path&, StorageType);    \
    template ModelWeights<T> load_checkpoint<T>(const std::filesystem::path&, const ArchitectureConfig&); \
    template std::uint64_t checkpoint_size(const ModelWeights<T>&, StorageType);

RFN_INSTANTIATE_CHECKPOINT(float)
RFN_INSTANTIATE_CHECKPOINT(double)

#undef RFN_INSTANTIATE_CHECKPOINT

}  // namespace rfn
