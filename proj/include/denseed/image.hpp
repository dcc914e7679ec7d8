#pragma once

#include <cstddef>
#include <vector>

#include "denseed/error.hpp"

namespace denseed {

/// Single-channel row-major image.
template <class T>
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, T fill = T(0)) : height(h), width(w), pixels(h * w, fill) {}

  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }
  T& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  const T& at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
  bool operator==(const Image&) const = default;

  template <class U>
  Image<U> cast() const {
    Image<U> out(height, width);
    for (std::size_t i = 0; i < pixels.size(); ++i) out.pixels[i] = static_cast<U>(pixels[i]);
    return out;
  }
};

}  // namespace denseed
