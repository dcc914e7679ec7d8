#pragma once

#include <tiffio.h>

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "denseed/image.hpp"

namespace denseed::io {

namespace detail {

inline std::string& tiff_message() {
  thread_local std::string msg;
  return msg;
}

inline void tiff_handler(const char* module, const char* fmt, va_list ap) {
  char buf[512];
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  tiff_message() = (module ? std::string(module) + ": " : std::string()) + buf;
}

inline void tiff_silence() {
  static const bool once = [] {
    TIFFSetErrorHandler(tiff_handler);
    TIFFSetWarningHandler(nullptr);
    return true;
  }();
  (void)once;
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

inline TiffPtr tiff_open(const std::filesystem::path& path, const char* mode) {
  tiff_silence();
  tiff_message().clear();
  TiffPtr t(TIFFOpen(path.c_str(), mode));
  require(t != nullptr, ErrorCode::io, "cannot open TIFF " + path.string() + (tiff_message().empty() ? "" : " (" + tiff_message() + ")"));
  return t;
}

template <class Sample>
void copy_row(const unsigned char* src, std::uint16_t* dst, std::size_t n, bool invert) {
  const auto* s = reinterpret_cast<const Sample*>(src);
  constexpr auto top = static_cast<std::uint16_t>(~Sample(0));
  for (std::size_t i = 0; i < n; ++i) dst[i] = invert ? static_cast<std::uint16_t>(top - s[i]) : s[i];
}

inline Image<std::uint16_t> read_directory(TIFF* t, const std::string& where) {
  std::uint32_t w = 0, h = 0;
  std::uint16_t spp = 1, bps = 0, fmt = SAMPLEFORMAT_UINT, photometric = PHOTOMETRIC_MINISBLACK;
  TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(t, TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &fmt);
  TIFFGetField(t, TIFFTAG_PHOTOMETRIC, &photometric);
  require(spp == 1, ErrorCode::format, where + ": " + std::to_string(spp) + " samples per pixel, expected grayscale");
  require(photometric == PHOTOMETRIC_MINISBLACK || photometric == PHOTOMETRIC_MINISWHITE, ErrorCode::format,
          where + ": not a grayscale photometric interpretation");
  require(bps == 8 || bps == 16, ErrorCode::format, where + ": " + std::to_string(bps) + "-bit samples unsupported");
  require(fmt == SAMPLEFORMAT_UINT, ErrorCode::format, where + ": samples are not unsigned integers");
  require(w > 0 && h > 0, ErrorCode::format, where + ": empty image");
  const bool invert = photometric == PHOTOMETRIC_MINISWHITE;

  Image<std::uint16_t> img(h, w);
  const auto row = [&](const unsigned char* src, std::uint16_t* dst, std::size_t n) {
    if (bps == 8) copy_row<std::uint8_t>(src, dst, n, invert);
    else copy_row<std::uint16_t>(src, dst, n, invert);
  };
  if (TIFFIsTiled(t)) {
    std::uint32_t tw = 0, th = 0;
    TIFFGetField(t, TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(t, TIFFTAG_TILELENGTH, &th);
    std::vector<unsigned char> buf(static_cast<std::size_t>(TIFFTileSize(t)));
    for (std::uint32_t y0 = 0; y0 < h; y0 += th) {
      for (std::uint32_t x0 = 0; x0 < w; x0 += tw) {
        require(TIFFReadTile(t, buf.data(), x0, y0, 0, 0) >= 0, ErrorCode::format, where + ": tile read failed");
        for (std::uint32_t y = y0; y < std::min(h, y0 + th); ++y) {
          const std::size_t n = std::min(w, x0 + tw) - x0;
          row(buf.data() + static_cast<std::size_t>(y - y0) * tw * (bps / 8), &img.at(y, x0), n);
        }
      }
    }
  } else {
    std::vector<unsigned char> buf(static_cast<std::size_t>(TIFFScanlineSize(t)));
    for (std::uint32_t y = 0; y < h; ++y) {
      require(TIFFReadScanline(t, buf.data(), y) >= 0, ErrorCode::format, where + ": scanline read failed");
      row(buf.data(), &img.at(y, 0), w);
    }
  }
  return img;
}

}  // namespace detail

/// Reads every page of an 8- or 16-bit unsigned grayscale TIFF. 8-bit data is
/// widened without rescaling.
inline std::vector<Image<std::uint16_t>> read_tiff_pages(const std::filesystem::path& path) {
  auto t = detail::tiff_open(path, "r");
  std::vector<Image<std::uint16_t>> pages;
  do {
    pages.push_back(detail::read_directory(t.get(), path.string() + " page " + std::to_string(pages.size())));
  } while (TIFFReadDirectory(t.get()));
  return pages;
}

/// Writes 16-bit grayscale pages, uncompressed, one strip per page.
inline void write_tiff16(const std::filesystem::path& path, const std::vector<Image<std::uint16_t>>& pages) {
  require(!pages.empty(), ErrorCode::invalid_argument, "no pages to write");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto t = detail::tiff_open(path, "w");
  for (const auto& img : pages) {
    require(!img.empty(), ErrorCode::invalid_argument, "cannot write an empty image");
    TIFFSetField(t.get(), TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(img.width));
    TIFFSetField(t.get(), TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(img.height));
    TIFFSetField(t.get(), TIFFTAG_SAMPLESPERPIXEL, 1);
    TIFFSetField(t.get(), TIFFTAG_BITSPERSAMPLE, 16);
    TIFFSetField(t.get(), TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_UINT);
    TIFFSetField(t.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(t.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(t.get(), TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(t.get(), TIFFTAG_ROWSPERSTRIP, static_cast<std::uint32_t>(img.height));
    if (pages.size() > 1) TIFFSetField(t.get(), TIFFTAG_SUBFILETYPE, FILETYPE_PAGE);
    for (std::size_t y = 0; y < img.height; ++y) {
      auto* row = const_cast<std::uint16_t*>(&img.at(y, 0));
      require(TIFFWriteScanline(t.get(), row, static_cast<std::uint32_t>(y), 0) >= 0, ErrorCode::io,
              "TIFF write failed for " + path.string());
    }
    require(TIFFWriteDirectory(t.get()) != 0, ErrorCode::io, "TIFF write failed for " + path.string());
  }
}

inline Image<std::uint16_t> read_tiff(const std::filesystem::path& path) { return read_tiff_pages(path).front(); }
inline void write_tiff16(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  write_tiff16(path, std::vector<Image<std::uint16_t>>{img});
}

}  // namespace denseed::io
