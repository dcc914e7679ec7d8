#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "denseed/eval/profile.hpp"
#include "denseed/io/files.hpp"
#include "denseed/io/kv.hpp"
#include "denseed/io/png.hpp"
#include "denseed/io/tiff.hpp"
#include "denseed/train/loss_log.hpp"
#include "denseed/train/trainer.hpp"

namespace denseed::eval {

namespace fs = std::filesystem;

struct ImageResult {
  std::string image_id;
  double mse = 0;
  Image<float> input, output, target;  // empty when not kept for export
};

struct ProfileResult {
  std::string label;
  ProfileSeries series;
  DipResult dip;
};

struct EvalReport {
  std::vector<ImageResult> images;
  double mean_mse = 0;
  std::vector<ProfileResult> profiles;
  std::vector<std::string> artifacts;

  std::string csv() const {
    std::string out = "image_id,mse\n";
    char buf[64];
    for (const auto& r : images) {
      std::snprintf(buf, sizeof buf, ",%.17g\n", r.mse);
      out += r.image_id + buf;
    }
    return out;
  }
};

/// Runs the model on every test frame and scores it against the FOV target.
/// The metric uses the raw output; clamping to [0,1] happens only on export.
/// The first `keep_images` results keep their images for export.
inline EvalReport evaluate(const arch::NetworkGraph& g, const ParameterSet<float>& params,
                           const std::vector<train::TestFrame>& frames, std::size_t keep_images = SIZE_MAX) {
  require(!frames.empty(), ErrorCode::empty_test, "no test frames to evaluate");
  EvalReport rep;
  double sum = 0;
  for (const auto& f : frames) {
    auto out = predict(g, params, train::as_batch(f.input));
    ImageResult r{f.id, mse_loss(out, train::as_batch(f.target)), {}, {}, {}};
    if (rep.images.size() < keep_images) {
      r.input = f.input;
      r.output = data::tensor_to_image(out);
      r.target = f.target;
    }
    sum += r.mse;
    rep.images.push_back(std::move(r));
  }
  rep.mean_mse = sum / static_cast<double>(rep.images.size());
  return rep;
}

/// Profiles the same segment through a kept result's input, output and target.
inline void add_profiles(EvalReport& rep, std::size_t image, Point p0, Point p1, std::size_t n, double um_per_px = 1.0,
                         double threshold = kResolvedDip) {
  const auto& r = rep.images.at(image);
  require(!r.output.empty(), ErrorCode::invalid_argument, "image " + r.image_id + " was not kept");
  const auto add = [&](const char* which, const Image<float>& img) {
    const std::string label = r.image_id + "_" + which;
    auto s = line_profile(img, p0, p1, n, um_per_px, label);
    const auto d = dip_metric(s, threshold);
    rep.profiles.push_back({label, std::move(s), d});
  };
  add("input", r.input);
  add("output", r.output);
  add("target", r.target);
}

/// Horizontal profile through the centre row of the first kept image.
inline void add_default_profiles(EvalReport& rep) {
  for (std::size_t i = 0; i < rep.images.size(); ++i) {
    const auto& img = rep.images[i].output;
    if (img.empty()) continue;
    const double y = static_cast<double>(img.height / 2);
    add_profiles(rep, i, {0, y}, {static_cast<double>(img.width - 1), y}, img.width);
    return;
  }
}

namespace detail {

inline double unit(float v) { return std::clamp(static_cast<double>(v), 0.0, 1.0); }

/// Input | output | target, side by side.
template <class Out>
Image<Out> triptych(const ImageResult& r, double full_scale) {
  const std::size_t h = r.input.height, w = r.input.width;
  Image<Out> img(h, 3 * w);
  const Image<float>* parts[3] = {&r.input, &r.output, &r.target};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        img.at(y, k * w + x) = static_cast<Out>(std::lround(unit(parts[k]->at(y, x)) * full_scale));
      }
    }
  }
  return img;
}

struct Canvas {
  std::size_t w, h;
  std::vector<std::uint8_t> rgb;
  Canvas(std::size_t w_, std::size_t h_) : w(w_), h(h_), rgb(w_ * h_ * 3, 255) {}
  void set(long x, long y, const std::uint8_t c[3]) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
    std::copy_n(c, 3, &rgb[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3]);
  }
  void line(long x0, long y0, long x1, long y1, const std::uint8_t c[3]) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

/// Polyline chart on a fixed canvas. With `log_y`, the y axis is log10 when
/// every value is positive.
inline void plot_series(const fs::path& path, const std::vector<std::vector<std::pair<double, double>>>& series,
                        bool log_y = true) {
  constexpr std::size_t W = 640, H = 400;
  constexpr long L = 50, R = 620, T = 20, B = 370;
  Canvas c(W, H);
  static const std::uint8_t axis[3] = {0, 0, 0}, grid[3] = {220, 220, 220};
  static const std::uint8_t colors[][3] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}};
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  bool positive = log_y;
  for (const auto& s : series) {
    for (const auto& [x, y] : s) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      positive = positive && y > 0;
    }
  }
  const auto ty = [&](double y) { return positive ? std::log10(y) : y; };
  for (const auto& s : series) {
    for (const auto& [x, y] : s) y0 = std::min(y0, ty(y)), y1 = std::max(y1, ty(y));
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  for (int k = 1; k < 5; ++k) {
    const long gy = T + (B - T) * k / 5;
    c.line(L, gy, R, gy, grid);
  }
  c.line(L, B, R, B, axis);
  c.line(L, T, L, B, axis);
  const auto px = [&](double x) { return L + std::lround((x - x0) / (x1 - x0) * static_cast<double>(R - L)); };
  const auto py = [&](double y) { return B - std::lround((ty(y) - y0) / (y1 - y0) * static_cast<double>(B - T)); };
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    for (std::size_t k = 1; k < s.size(); ++k) {
      c.line(px(s[k - 1].first), py(s[k - 1].second), px(s[k].first), py(s[k].second), colors[i % 3]);
    }
  }
  io::write_png(path, W, H, 3, c.rgb);
}

inline std::string safe_name(std::string s) {
  for (char& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return s;
}

}  // namespace detail

/// Writes report.csv, per-image triptychs (8-bit PNG, 16-bit TIFF), the loss
/// log as CSV and plot, profile CSVs and `export.txt` listing every file.
/// Output depends only on the inputs, so re-exporting gives the same bytes.
inline std::vector<std::string> export_artifacts(const EvalReport& rep, const train::LossLog& log, const fs::path& out) {
  fs::create_directories(out);
  std::vector<std::string> files;
  io::KeyValues manifest;
  const auto put = [&](const std::string& rel, std::string_view bytes) {
    io::write_file(out / rel, bytes);
    files.push_back(rel);
  };

  put("report.csv", rep.csv());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", rep.mean_mse);
  manifest.set("mean_mse", buf);
  manifest.set("images", std::to_string(rep.images.size()));

  for (const auto& r : rep.images) {
    if (r.output.empty()) continue;
    const std::string stem = "images/" + detail::safe_name(r.image_id);
    io::write_png(out / (stem + ".png"), detail::triptych<std::uint8_t>(r, 255.0));
    io::write_tiff16(out / (stem + ".tif"), detail::triptych<std::uint16_t>(r, 65535.0));
    files.push_back(stem + ".png");
    files.push_back(stem + ".tif");
  }

  if (log.empty()) {
    manifest.set("loss_plot", "omitted (empty loss log)");
  } else {
    put("loss.csv", log.csv());
    std::vector<std::pair<double, double>> tr, te;
    for (const auto& r : log.records) {
      tr.emplace_back(static_cast<double>(r.epoch), r.train_mse);
      if (r.test_mse) te.emplace_back(static_cast<double>(r.epoch), *r.test_mse);
    }
    detail::plot_series(out / "loss.png", {tr, te});
    files.push_back("loss.png");
    manifest.set("loss_plot", "loss.png (blue train, red test)");
  }

  for (const auto& p : rep.profiles) {
    const std::string rel = "profiles/" + detail::safe_name(p.label) + ".csv";
    put(rel, p.series.csv());
    std::snprintf(buf, sizeof buf, "resolved=%d dip_depth=%.6f", p.dip.resolved ? 1 : 0, p.dip.dip_depth);
    manifest.set("profile." + p.label, buf);
  }
  for (const auto& f : files) manifest.set("file." + f, io::file_crc32(out / f));
  io::write_key_values(out / "export.txt", manifest);
  files.push_back("export.txt");
  return files;
}

}  // namespace denseed::eval
