#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "denseed/image.hpp"

namespace denseed::eval {

struct Point {
  double x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

/// Intensity along a segment, divided by its maximum.
struct ProfileSeries {
  std::vector<double> positions;  // distance from p0, in px times um_per_px
  std::vector<double> values;
  std::string source;
  double scale = 0;   // the maximum the values were divided by
  bool flat = false;  // all-zero series

  std::string csv() const {
    std::string out = "position,value\n";
    char buf[64];
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", positions[i], values[i]);
      out += buf;
    }
    return out;
  }
};

template <class T>
double bilinear(const Image<T>& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double tx = x - fx, ty = y - fy;
  const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const auto v = [&](std::size_t yy, std::size_t xx) { return static_cast<double>(img.at(yy, xx)); };
  double s = v(y0, x0);
  if (tx != 0) s = (1 - tx) * s + tx * v(y0, x1);
  if (ty != 0) {
    double b = v(y1, x0);
    if (tx != 0) b = (1 - tx) * b + tx * v(y1, x1);
    s = (1 - ty) * s + ty * b;
  }
  return s;
}

/// Samples `n` evenly spaced points from p0 to p1 (inclusive) with bilinear
/// interpolation.
template <class T>
ProfileSeries line_profile(const Image<T>& img, Point p0, Point p1, std::size_t n, double um_per_px = 1.0,
                           std::string source = {}) {
  require(n >= 2, ErrorCode::invalid_argument, "profile needs at least two samples");
  require(!(p0 == p1), ErrorCode::invalid_argument, "profile endpoints coincide");
  require(um_per_px > 0, ErrorCode::invalid_argument, "um_per_px must be positive");
  const auto inside = [&](Point p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0 && p.y >= 0 &&
           p.x <= static_cast<double>(img.width) - 1 && p.y <= static_cast<double>(img.height) - 1;
  };
  require(!img.empty() && inside(p0) && inside(p1), ErrorCode::invalid_argument, "profile endpoint outside the image");

  ProfileSeries s;
  s.source = std::move(source);
  const double len = std::hypot(p1.x - p0.x, p1.y - p0.y);
  const double steps = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(i);
    const double x = std::clamp(p0.x + (p1.x - p0.x) * k / steps, 0.0, static_cast<double>(img.width - 1));
    const double y = std::clamp(p0.y + (p1.y - p0.y) * k / steps, 0.0, static_cast<double>(img.height - 1));
    s.positions.push_back(len * k / steps * um_per_px);
    s.values.push_back(bilinear(img, x, y));
  }
  s.scale = *std::max_element(s.values.begin(), s.values.end());
  if (s.scale > 0) {
    for (auto& v : s.values) v /= s.scale;
  } else {
    std::fill(s.values.begin(), s.values.end(), 0.0);
    s.flat = true;
  }
  return s;
}

struct DipResult {
  bool resolved = false;
  double dip_depth = 0;
  std::vector<double> peak_positions;
};

inline constexpr double kResolvedDip = 0.05;

/// Takes the two highest interior local maxima; the dip is the lower peak
/// minus the lowest value between them.
inline DipResult dip_metric(const ProfileSeries& p, double threshold = kResolvedDip) {
  const auto& v = p.values;
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] <= v[i - 1]) continue;
    // Walk a plateau to its end; it is a maximum if it then falls.
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    if (j + 1 < v.size() && v[j + 1] < v[i]) peaks.push_back((i + j) / 2);
    i = j;
  }
  DipResult r;
  if (peaks.size() < 2) return r;
  std::partial_sort(peaks.begin(), peaks.begin() + 2, peaks.end(), [&](std::size_t a, std::size_t b) {
    return v[a] != v[b] ? v[a] > v[b] : a < b;
  });
  const std::size_t a = std::min(peaks[0], peaks[1]), b = std::max(peaks[0], peaks[1]);
  const double valley = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(a), v.begin() + static_cast<std::ptrdiff_t>(b) + 1);
  r.dip_depth = std::min(v[a], v[b]) - valley;
  r.resolved = r.dip_depth >= threshold;
  r.peak_positions = {p.positions[a], p.positions[b]};
  return r;
}

}  // namespace denseed::eval
