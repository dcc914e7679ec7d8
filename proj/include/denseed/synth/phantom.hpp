#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "denseed/image.hpp"

namespace denseed::synth {

inline constexpr double kFwhmPerSigma = 2.3548;

inline double sigma_of(double fwhm) { return fwhm / kFwhmPerSigma; }

/// Separation at which two equal Gaussian spots stop showing a dip (2 sigma).
inline double sparrow_limit(double fwhm) { return 2.0 * sigma_of(fwhm); }

/// Point source at pixel coordinates (pixel centers are integers).
struct Emitter {
  double x = 0, y = 0, amplitude = 1;
  bool operator==(const Emitter&) const = default;
};

/// Polyline with a uniform intensity per unit length.
struct Filament {
  std::vector<std::array<double, 2>> points;
  double intensity = 1;
  bool operator==(const Filament&) const = default;
};

struct PhantomSpec {
  std::size_t height = 64, width = 64;
  std::vector<Emitter> emitters;
  std::vector<Filament> filaments;
  std::uint64_t seed = 0;

  bool inside(double x, double y) const {
    return x >= 0 && y >= 0 && x <= static_cast<double>(width - 1) && y <= static_cast<double>(height - 1);
  }

  void check() const {
    require(height >= 1 && width >= 1, ErrorCode::invalid_argument, "phantom needs a non-empty size");
    for (const auto& e : emitters) {
      require(std::isfinite(e.x) && std::isfinite(e.y) && inside(e.x, e.y), ErrorCode::invalid_argument,
              "emitter outside the image");
      require(e.amplitude > 0, ErrorCode::invalid_argument, "emitter amplitude must be positive");
    }
    for (const auto& f : filaments) {
      require(f.points.size() >= 2 && f.intensity > 0, ErrorCode::invalid_argument, "filament needs 2 points and intensity > 0");
      for (const auto& p : f.points) require(inside(p[0], p[1]), ErrorCode::invalid_argument, "filament outside the image");
    }
  }
  bool operator==(const PhantomSpec&) const = default;
};

namespace detail {

inline void splat(Image<double>& img, double x, double y, double a) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double tx = x - fx, ty = y - fy;
  const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  // At the last row/column the weight on the clamped neighbour is zero.
  img.at(y0, x0) += a * (1 - tx) * (1 - ty);
  img.at(y0, x1) += a * tx * (1 - ty);
  img.at(y1, x0) += a * (1 - tx) * ty;
  img.at(y1, x1) += a * tx * ty;
}

}  // namespace detail

/// Deposits emitters with bilinear weights, so the image sums to the total
/// emitted intensity. Filaments are sampled every quarter pixel.
inline Image<double> render_phantom(const PhantomSpec& spec) {
  spec.check();
  Image<double> img(spec.height, spec.width);
  for (const auto& e : spec.emitters) detail::splat(img, e.x, e.y, e.amplitude);
  for (const auto& f : spec.filaments) {
    for (std::size_t s = 0; s + 1 < f.points.size(); ++s) {
      const auto& [ax, ay] = f.points[s];
      const auto& [bx, by] = f.points[s + 1];
      const double len = std::hypot(bx - ax, by - ay);
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / 0.25)));
      const double w = f.intensity * len / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        detail::splat(img, ax + t * (bx - ax), ay + t * (by - ay), w);
      }
    }
  }
  return img;
}

/// Normalized 1-D Gaussian taps, truncated at 4 sigma.
inline std::vector<double> gaussian_kernel(double fwhm) {
  require(fwhm > 0 && std::isfinite(fwhm), ErrorCode::invalid_argument, "fwhm must be positive");
  const double s = sigma_of(fwhm);
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(4.0 * s));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (s * s));
    k[static_cast<std::size_t>(i + r)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

namespace detail {

/// Half-sample symmetric reflection: -1 -> 0, n -> n-1.
inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

}  // namespace detail

/// Separable Gaussian blur with reflective borders. The reflected operator's
/// columns sum to one, so the image sum is preserved.
inline Image<double> apply_gaussian_psf(const Image<double>& img, double fwhm) {
  const auto k = gaussian_kernel(fwhm);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  Image<double> tmp(img.height, img.width), out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double s = 0;
      for (std::ptrdiff_t i = -r; i <= r; ++i) {
        s += k[static_cast<std::size_t>(i + r)] * img.at(y, detail::reflect(static_cast<std::ptrdiff_t>(x) + i, img.width));
      }
      tmp.at(y, x) = s;
    }
  }
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double s = 0;
      for (std::ptrdiff_t i = -r; i <= r; ++i) {
        s += k[static_cast<std::size_t>(i + r)] * tmp.at(detail::reflect(static_cast<std::ptrdiff_t>(y) + i, img.height), x);
      }
      out.at(y, x) = s;
    }
  }
  return out;
}

/// Poisson(scale * x) / scale shot noise plus additive N(0, sigma^2).
inline Image<double> add_noise(const Image<double>& img, double poisson_scale, double gaussian_sigma, std::uint64_t seed) {
  require(poisson_scale > 0 && gaussian_sigma >= 0, ErrorCode::invalid_argument, "bad noise parameters");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Image<double> out(img.height, img.width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double x = img.pixels[i];
    require(x >= 0 && std::isfinite(x), ErrorCode::invalid_argument, "noise model needs a non-negative image");
    double v = 0;
    if (x > 0) {
      std::poisson_distribution<long long> p(poisson_scale * x);
      v = static_cast<double>(p(rng)) / poisson_scale;
    }
    if (gaussian_sigma > 0) v += gaussian_sigma * gauss(rng);
    out.pixels[i] = v;
  }
  return out;
}

}  // namespace denseed::synth
