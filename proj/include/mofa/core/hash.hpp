#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace mofa {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Hash over the relative paths and contents of every regular file under `dir`,
/// visited in sorted order.
std::string sha256_tree(const std::filesystem::path& dir);

}  // namespace mofa
