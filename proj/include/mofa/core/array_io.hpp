#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "mofa/core/tensor.hpp"

namespace mofa {

/// n-D float32 array. An empty shape denotes a scalar holding one value.
struct NdArray {
  std::vector<std::size_t> shape;
  std::vector<float> values;

  static std::size_t element_count(const std::vector<std::size_t>& shape);
  bool operator==(const NdArray&) const = default;
};

/// Path of the text header that accompanies a raw array file.
std::filesystem::path header_path(const std::filesystem::path& raw);

/// Writes `path` as raw little-endian float32 and `path.hdr` with
/// `shape=`, `dtype=float32` and `order=row-major` lines.
void save_array(const NdArray& array, const std::filesystem::path& path);
NdArray load_array(const std::filesystem::path& path);

NdArray to_array(const Tensor3& tensor);
Tensor3 to_tensor3(const NdArray& array);

}  // namespace mofa
