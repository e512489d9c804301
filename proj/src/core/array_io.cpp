#include "mofa/core/array_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "mofa/core/errors.hpp"

namespace mofa {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are unsupported");

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::string format_shape(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::size_t> parse_shape(const std::string& text) {
  std::vector<std::size_t> shape;
  if (text.empty()) return shape;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw CorruptionError("bad shape entry '" + item + "' in array header");
    }
  }
  return shape;
}

}  // namespace

std::size_t NdArray::element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::filesystem::path header_path(const std::filesystem::path& raw) {
  return std::filesystem::path(raw.string() + ".hdr");
}

void save_array(const NdArray& array, const std::filesystem::path& path) {
  if (array.values.size() != NdArray::element_count(array.shape)) {
    throw DomainError("array holds " + std::to_string(array.values.size()) +
                      " values but shape implies " +
                      std::to_string(NdArray::element_count(array.shape)));
  }
  for (float v : array.values) {
    if (!std::isfinite(v)) throw DomainError("cannot persist a non-finite array");
  }
  std::ofstream raw(path, std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot open " + path.string() + " for writing");
  for (float v : array.values) {
    std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(v));
    raw.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!raw) throw IoError("write failed for " + path.string());

  std::ofstream hdr(header_path(path), std::ios::trunc);
  if (!hdr) throw IoError("cannot open " + header_path(path).string() + " for writing");
  hdr << "shape=" << format_shape(array.shape) << "\n"
      << "dtype=float32\n"
      << "order=row-major\n";
  if (!hdr) throw IoError("write failed for " + header_path(path).string());
}

NdArray load_array(const std::filesystem::path& path) {
  std::ifstream hdr(header_path(path));
  if (!hdr) throw IoError("cannot open array header " + header_path(path).string());
  bool have_shape = false;
  NdArray out;
  std::string line;
  while (std::getline(hdr, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw CorruptionError("malformed header line '" + line + "'");
    auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    if (key == "shape") {
      out.shape = parse_shape(value);
      have_shape = true;
    } else if (key == "dtype") {
      if (value != "float32") throw CorruptionError("unsupported dtype '" + value + "'");
    } else if (key == "order") {
      if (value != "row-major") throw CorruptionError("unsupported order '" + value + "'");
    }
  }
  if (!have_shape) throw CorruptionError("array header lacks a shape line");

  std::ifstream raw(path, std::ios::binary | std::ios::ate);
  if (!raw) throw IoError("cannot open " + path.string());
  auto bytes = static_cast<std::size_t>(raw.tellg());
  std::size_t expected = NdArray::element_count(out.shape);
  if (bytes != expected * sizeof(float)) {
    throw CorruptionError("header declares " + std::to_string(expected) + " elements but " +
                          path.string() + " holds " + std::to_string(bytes) + " bytes");
  }
  raw.seekg(0);
  out.values.resize(expected);
  for (auto& v : out.values) {
    std::uint32_t bits = 0;
    raw.read(reinterpret_cast<char*>(&bits), sizeof bits);
    v = std::bit_cast<float>(to_little(bits));
  }
  if (!raw) throw IoError("read failed for " + path.string());
  return out;
}

NdArray to_array(const Tensor3& tensor) {
  NdArray out;
  out.shape = {static_cast<std::size_t>(tensor.height()), static_cast<std::size_t>(tensor.width()),
               static_cast<std::size_t>(tensor.channels())};
  out.values.assign(tensor.data().begin(), tensor.data().end());
  return out;
}

Tensor3 to_tensor3(const NdArray& array) {
  if (array.shape.size() != 3) throw CorruptionError("expected a 3-D array");
  Shape3 shape{static_cast<int>(array.shape[0]), static_cast<int>(array.shape[1]),
               static_cast<int>(array.shape[2])};
  return Tensor3(shape, std::vector<double>(array.values.begin(), array.values.end()));
}

}  // namespace mofa
