#include "polarbev/tensor_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace polarbev::tc {

namespace {

constexpr char kMagic[4] = {'P', 'B', 'T', 'F'};

template <typename T>
constexpr std::uint32_t dtype_code() {
    if constexpr (std::is_same_v<T, float>) return 1;
    else return 2;
}

const char* dtype_name(std::uint32_t code) { return code == 1 ? "f32" : "f64"; }

} // namespace

template <typename T>
void save_tensor(const std::filesystem::path& path, const std::string& name, const Tensor<T>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(kMagic, 4);
    const std::uint32_t dtype = dtype_code<T>();
    const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
    f.write(reinterpret_cast<const char*>(&dtype), 4);
    f.write(reinterpret_cast<const char*>(&rank), 4);
    for (std::size_t i = 0; i < t.rank(); ++i) {
        const std::uint64_t e = static_cast<std::uint64_t>(t.dim(i));
        f.write(reinterpret_cast<const char*>(&e), 8);
    }
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(sizeof(T) * t.numel()));
    if (!f) throw IoError("short write to " + path.string());

    nlohmann::json sidecar;
    sidecar["name"] = name;
    sidecar["dtype"] = dtype_name(dtype);
    sidecar["shape"] = t.shape();
    std::ofstream sf(path.string() + ".json");
    if (!sf) throw IoError("cannot open " + path.string() + ".json for writing");
    sf << sidecar.dump(2) << "\n";
}

namespace {

struct RawTensor {
    std::uint32_t dtype;
    Shape shape;
    std::vector<char> payload;
};

RawTensor read_raw(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(path.string() + " is not a tensor file (bad magic)");
    }
    RawTensor raw;
    std::uint32_t rank = 0;
    f.read(reinterpret_cast<char*>(&raw.dtype), 4);
    f.read(reinterpret_cast<char*>(&rank), 4);
    if (!f || (raw.dtype != 1 && raw.dtype != 2) || rank > 8) {
        throw IoError(path.string() + ": corrupt tensor header");
    }
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint64_t e = 0;
        f.read(reinterpret_cast<char*>(&e), 8);
        raw.shape.push_back(static_cast<std::int64_t>(e));
        numel *= static_cast<std::int64_t>(e);
    }
    const std::size_t elem = raw.dtype == 1 ? 4 : 8;
    raw.payload.resize(static_cast<std::size_t>(numel) * elem);
    f.read(raw.payload.data(), static_cast<std::streamsize>(raw.payload.size()));
    if (!f) throw IoError(path.string() + ": truncated tensor payload");
    return raw;
}

} // namespace

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
    RawTensor raw = read_raw(path);
    const std::size_t n = raw.payload.size() / (raw.dtype == 1 ? 4 : 8);
    std::vector<T> values(n);
    if (raw.dtype == 1) {
        const float* src = reinterpret_cast<const float*>(raw.payload.data());
        for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<T>(src[i]);
    } else {
        const double* src = reinterpret_cast<const double*>(raw.payload.data());
        for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<T>(src[i]);
    }
    return Tensor<T>::from_data(std::move(raw.shape), std::move(values));
}

TensorInfo peek_tensor(const std::filesystem::path& path) {
    RawTensor raw = read_raw(path);
    TensorInfo info;
    info.dtype = static_cast<int>(raw.dtype);
    info.shape = raw.shape;
    std::ifstream sf(path.string() + ".json");
    if (sf) {
        nlohmann::json sidecar;
        sf >> sidecar;
        info.name = sidecar.value("name", "");
    }
    return info;
}

template void save_tensor<float>(const std::filesystem::path&, const std::string&, const Tensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const std::string&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(const std::filesystem::path&);
template Tensor<double> load_tensor<double>(const std::filesystem::path&);

} // namespace polarbev::tc
