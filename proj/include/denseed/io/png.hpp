#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "denseed/image.hpp"

namespace denseed::io {

/// Writes an 8-bit PNG. `channels` is 1 (gray) or 3 (RGB), interleaved rows.
inline void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
                      const std::vector<std::uint8_t>& pixels) {
  require(channels == 1 || channels == 3, ErrorCode::invalid_argument, "PNG needs 1 or 3 channels");
  require(width > 0 && height > 0 && pixels.size() == width * height * static_cast<std::size_t>(channels),
          ErrorCode::invalid_argument, "PNG pixel buffer does not match its size");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorCode::io, "cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = width * static_cast<std::size_t>(channels);
  for (std::size_t y = 0; y < height; ++y) png_write_row(png, pixels.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::filesystem::path& path, const Image<std::uint8_t>& img) {
  write_png(path, img.width, img.height, 1, img.pixels);
}

}  // namespace denseed::io
