#include "mofa/core/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <vector>

#include "mofa/core/errors.hpp"

namespace mofa {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor3 quantize_8bit(const Tensor3& pixels) {
  Tensor3 out = pixels;
  for (auto& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

ImageTensor load_image(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot read " + path.string() + ": " + msg);
  }
  if ((image.format & PNG_FORMAT_FLAG_COLOR) == 0 || (image.format & PNG_FORMAT_FLAG_ALPHA) != 0) {
    int channels = PNG_IMAGE_SAMPLE_CHANNELS(image.format);
    png_image_free(&image);
    throw FormatError(path.string() + " has " + std::to_string(channels) +
                      " channels; only 3-channel RGB is supported");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  Tensor3 pixels(static_cast<int>(image.height), static_cast<int>(image.width), 3);
  auto dst = pixels.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = buffer[i] / 255.0;
  return ImageTensor(std::move(pixels));
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
  if (image.channels() != 3) throw FormatError("only RGB images can be written");
  std::vector<png_byte> buffer(image.pixels().size());
  auto src = image.pixels().data();
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = to_byte(src[i]);
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.width());
  out.height = static_cast<png_uint_32>(image.height());
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    std::string msg = out.message;
    png_image_free(&out);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

void save_mask_png(const PatchMask& mask, const std::filesystem::path& path) {
  const int row_bytes = (mask.width() + 7) / 8;
  std::vector<png_byte> rows(static_cast<std::size_t>(row_bytes) * mask.height(), 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.contains(y, x)) rows[y * row_bytes + x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
    }
  }
  std::vector<png_bytep> row_ptrs(mask.height());
  for (int y = 0; y < mask.height(); ++y) row_ptrs[y] = rows.data() + y * row_bytes;

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("cannot write " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(mask.width()),
               static_cast<png_uint_32>(mask.height()), 1, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace mofa
