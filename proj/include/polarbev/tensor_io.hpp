#pragma once

#include <filesystem>
#include <string>

#include "polarbev/tensor.hpp"

namespace polarbev::tc {

// Flat little-endian tensor file: magic "PBTF", u32 dtype code (1 = f32,
// 2 = f64), u32 rank, u64 extents, then the payload. A JSON sidecar at
// <path>.json names the tensor and mirrors dtype/shape for tooling.

struct TensorInfo {
    std::string name;
    int dtype = 0;
    Shape shape;
};

template <typename T>
void save_tensor(const std::filesystem::path& path, const std::string& name, const Tensor<T>& t);

// Loads any stored dtype and converts to T.
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

TensorInfo peek_tensor(const std::filesystem::path& path);

} // namespace polarbev::tc
