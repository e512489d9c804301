#pragma once

#include <filesystem>

#include "mofa/core/types.hpp"

namespace mofa {

/// Reads an 8-bit RGB PNG into a [0,1] tensor. Throws IoError when the file
/// cannot be read and FormatError for grayscale or alpha images.
ImageTensor load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are rounded to the nearest of 256 levels.
void save_image(const ImageTensor& image, const std::filesystem::path& path);

/// Writes the mask as a 1-bit grayscale PNG (white = support).
void save_mask_png(const PatchMask& mask, const std::filesystem::path& path);

/// Rounds every value to the nearest k/255, the grid PNG storage preserves.
Tensor3 quantize_8bit(const Tensor3& pixels);

}  // namespace mofa
