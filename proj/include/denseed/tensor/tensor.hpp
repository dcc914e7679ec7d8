#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "denseed/error.hpp"

namespace denseed {

/// Dense NCHW array.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : shape_{n, c, h, w}, data_(n * c * h * w, fill) {}

  std::size_t n() const { return shape_[0]; }
  std::size_t c() const { return shape_[1]; }
  std::size_t h() const { return shape_[2]; }
  std::size_t w() const { return shape_[3]; }
  std::size_t plane() const { return shape_[2] * shape_[3]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const std::array<std::size_t, 4>& shape() const { return shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T* sample(std::size_t i) { return data_.data() + i * shape_[1] * plane(); }
  const T* sample(std::size_t i) const { return data_.data() + i * shape_[1] * plane(); }
  T* channel(std::size_t i, std::size_t ch) { return sample(i) + ch * plane(); }
  const T* channel(std::size_t i, std::size_t ch) const { return sample(i) + ch * plane(); }

  T& operator()(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) {
    return data_[((i * shape_[1] + ch) * shape_[2] + y) * shape_[3] + x];
  }
  const T& operator()(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const {
    return data_[((i * shape_[1] + ch) * shape_[2] + y) * shape_[3] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool operator==(const Tensor& o) const = default;

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_[0], shape_[1], shape_[2], shape_[3]);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

 private:
  std::array<std::size_t, 4> shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

inline std::string shape_string(const std::array<std::size_t, 4>& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]) + "x" + std::to_string(s[3]);
}

template <class Range>
bool all_finite(const Range& v) {
  return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); });
}

}  // namespace denseed
