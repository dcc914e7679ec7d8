#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <vector>

#include "denseed/tensor/tensor.hpp"

// Convolution kernels in im2col form. All functions process one sample at a
// time; callers loop over the batch.
namespace denseed::ops {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Geometry of a convolution applied to an image of `channels` x `height` x
/// `width`, producing an out_h x out_w grid.
struct ConvGeometry {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t kernel = 1, stride = 1, pad = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

inline ConvGeometry conv_geometry(std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                                  std::size_t stride) {
  ConvGeometry g{channels, h, w, k, stride, k / 2, 0, 0};
  g.out_h = (h + 2 * g.pad - k) / stride + 1;
  g.out_w = (w + 2 * g.pad - k) / stride + 1;
  return g;
}

/// Transposed convolution whose output side is exactly stride * input side.
/// Returned geometry describes the equivalent forward convolution from the
/// (large) output image back to the input grid.
inline ConvGeometry transposed_geometry(std::size_t out_channels, std::size_t in_h, std::size_t in_w,
                                        std::size_t k, std::size_t stride) {
  ConvGeometry g{out_channels, in_h * stride, in_w * stride, k, stride, k / 2, in_h, in_w};
  return g;
}

template <class T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

/// Adds columns back into the image (adjoint of im2col).
template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* image) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const T* in = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

/// y[out, Ho, Wo] = W[out, in*k*k] * im2col(x) + b
template <class T>
void conv_forward(const T* x, const ConvGeometry& g, std::size_t out_channels, std::span<const T> weight,
                  std::span<const T> bias, T* y, std::vector<T>& scratch) {
  const T* cols = x;
  if (!g.is_pointwise()) {
    scratch.resize(g.rows() * g.cols());
    im2col(x, g, scratch.data());
    cols = scratch.data();
  }
  ConstMatMap<T> w(weight.data(), static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(g.rows()));
  ConstMatMap<T> c(cols, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
  MatMap<T> out(y, static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(g.cols()));
  out.noalias() = w * c;
  if (!bias.empty()) {
    for (std::size_t o = 0; o < out_channels; ++o) out.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  }
}

template <class T>
void conv_backward(const T* x, const ConvGeometry& g, std::size_t out_channels, std::span<const T> weight,
                   const T* dy, T* dx, std::span<T> dweight, std::span<T> dbias, std::vector<T>& scratch) {
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto ncols = static_cast<Eigen::Index>(g.cols());
  const auto oc = static_cast<Eigen::Index>(out_channels);
  ConstMatMap<T> grad_out(dy, oc, ncols);
  if (!dbias.empty()) {
    for (Eigen::Index o = 0; o < oc; ++o) dbias[static_cast<std::size_t>(o)] += grad_out.row(o).sum();
  }
  const T* cols = x;
  if (!g.is_pointwise()) {
    scratch.resize(g.rows() * g.cols());
    im2col(x, g, scratch.data());
    cols = scratch.data();
  }
  MatMap<T> dw(dweight.data(), oc, rows);
  dw.noalias() += grad_out * ConstMatMap<T>(cols, rows, ncols).transpose();
  if (dx == nullptr) return;
  ConstMatMap<T> w(weight.data(), oc, rows);
  if (g.is_pointwise()) {
    MatMap<T>(dx, rows, ncols).noalias() += w.transpose() * grad_out;
  } else {
    scratch.resize(g.rows() * g.cols());
    MatMap<T>(scratch.data(), rows, ncols).noalias() = w.transpose() * grad_out;
    col2im_add(scratch.data(), g, dx);
  }
}

/// Transposed convolution: y = col2im(W^T x) + b, with W stored [in, out*k*k].
template <class T>
void tconv_forward(const T* x, std::size_t in_channels, const ConvGeometry& g, std::span<const T> weight,
                   std::span<const T> bias, T* y, std::vector<T>& scratch) {
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto ncols = static_cast<Eigen::Index>(g.cols());
  const auto ic = static_cast<Eigen::Index>(in_channels);
  scratch.resize(g.rows() * g.cols());
  MatMap<T> cols(scratch.data(), rows, ncols);
  cols.noalias() = ConstMatMap<T>(weight.data(), ic, rows).transpose() * ConstMatMap<T>(x, ic, ncols);
  const std::size_t plane = g.height * g.width;
  std::fill(y, y + g.channels * plane, T(0));
  col2im_add(scratch.data(), g, y);
  if (!bias.empty()) {
    for (std::size_t o = 0; o < g.channels; ++o) {
      for (std::size_t i = 0; i < plane; ++i) y[o * plane + i] += bias[o];
    }
  }
}

template <class T>
void tconv_backward(const T* x, std::size_t in_channels, const ConvGeometry& g, std::span<const T> weight,
                    const T* dy, T* dx, std::span<T> dweight, std::span<T> dbias, std::vector<T>& scratch) {
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto ncols = static_cast<Eigen::Index>(g.cols());
  const auto ic = static_cast<Eigen::Index>(in_channels);
  const std::size_t plane = g.height * g.width;
  if (!dbias.empty()) {
    for (std::size_t o = 0; o < g.channels; ++o) {
      T s(0);
      for (std::size_t i = 0; i < plane; ++i) s += dy[o * plane + i];
      dbias[o] += s;
    }
  }
  scratch.resize(g.rows() * g.cols());
  im2col(dy, g, scratch.data());
  ConstMatMap<T> dcols(scratch.data(), rows, ncols);
  MatMap<T>(dweight.data(), ic, rows).noalias() += ConstMatMap<T>(x, ic, ncols) * dcols.transpose();
  if (dx != nullptr) {
    MatMap<T>(dx, ic, ncols).noalias() += ConstMatMap<T>(weight.data(), ic, rows) * dcols;
  }
}

}  // namespace denseed::ops
