#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "denseed/data/dataset.hpp"
#include "denseed/io/files.hpp"
#include "denseed/io/tiff.hpp"
#include "denseed/random.hpp"
#include "denseed/synth/phantom.hpp"

namespace denseed::synth {

namespace fs = std::filesystem;

/// How random phantoms are drawn: isolated emitters, close pairs at a random
/// orientation, and optional straight-segment filaments.
struct PhantomDistribution {
  std::size_t singles = 6;
  std::size_t pairs = 8;
  double min_separation = 2.0, max_separation = 8.0;
  std::size_t filaments = 0;
  double amp_lo = 0.6, amp_hi = 1.0;
  double margin = 4.0;
  double min_spacing = 0.0;  // minimum distance between object centres, 0 allows overlap
};

struct SynthConfig {
  std::size_t fovs = 8;
  std::size_t frames_per_fov = data::kFramesPerFov;
  std::size_t height = 256, width = 256;
  PhantomDistribution phantoms;
  double fwhm_wide = 6.0, fwhm_narrow = 2.0;
  double poisson_scale = 100.0, gaussian_sigma = 0.01;
  std::uint64_t seed = 0;

  void check() const {
    require(fovs >= 1 && frames_per_fov >= 1, ErrorCode::invalid_argument, "need at least one FOV and one frame");
    require(height >= 2 && width >= 2, ErrorCode::invalid_argument, "frame size too small");
    require(fwhm_narrow > 0 && fwhm_wide > fwhm_narrow, ErrorCode::invalid_argument,
            "wide PSF must be wider than narrow PSF");
    require(poisson_scale > 0 && gaussian_sigma >= 0, ErrorCode::invalid_argument, "bad noise parameters");
    const auto& p = phantoms;
    require(p.min_separation > 0 && p.max_separation >= p.min_separation && p.amp_lo > 0 && p.amp_hi >= p.amp_lo,
            ErrorCode::invalid_argument, "bad phantom distribution");
    require(2 * (p.margin + p.max_separation) < static_cast<double>(std::min(height, width)), ErrorCode::invalid_argument,
            "phantom margin and separation do not fit the frame");
  }
};

/// With `min_spacing` set, objects are placed by rejection sampling; one that
/// finds no free spot within a bounded number of draws is dropped.
inline PhantomSpec sample_phantom(const PhantomDistribution& d, std::size_t height, std::size_t width, std::uint64_t seed) {
  PhantomSpec s{height, width, {}, {}, seed};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto coord = [&](std::size_t n, double pad) { return pad + u(rng) * (static_cast<double>(n - 1) - 2 * pad); };
  const auto amp = [&] { return d.amp_lo + u(rng) * (d.amp_hi - d.amp_lo); };
  std::vector<std::array<double, 2>> centres;
  const auto place = [&](double pad, double& cx, double& cy) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      cx = coord(width, pad);
      cy = coord(height, pad);
      const bool free = std::all_of(centres.begin(), centres.end(),
                                    [&](const auto& c) { return std::hypot(c[0] - cx, c[1] - cy) >= d.min_spacing; });
      if (free) {
        centres.push_back({cx, cy});
        return true;
      }
    }
    return false;
  };
  double cx = 0, cy = 0;
  for (std::size_t i = 0; i < d.singles; ++i) {
    if (place(d.margin, cx, cy)) s.emitters.push_back({cx, cy, amp()});
  }
  const double pad = d.margin + d.max_separation / 2;
  for (std::size_t i = 0; i < d.pairs; ++i) {
    if (!place(pad, cx, cy)) continue;
    const double sep = d.min_separation + u(rng) * (d.max_separation - d.min_separation);
    const double th = u(rng) * std::numbers::pi;
    const double dx = 0.5 * sep * std::cos(th), dy = 0.5 * sep * std::sin(th);
    const double a = amp();
    s.emitters.push_back({cx - dx, cy - dy, a});
    s.emitters.push_back({cx + dx, cy + dy, a});
  }
  for (std::size_t i = 0; i < d.filaments; ++i) {
    Filament f{{}, 0.15 * amp()};
    for (int k = 0; k < 3; ++k) f.points.push_back({coord(width, d.margin), coord(height, d.margin)});
    s.filaments.push_back(std::move(f));
  }
  return s;
}

/// Frames are stored as round((x + 0.1) * 30000) so mild negative noise
/// survives 16-bit quantization.
inline Image<std::uint16_t> quantize(const Image<double>& img) {
  Image<std::uint16_t> out(img.height, img.width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.pixels[i] = static_cast<std::uint16_t>(std::clamp(std::round((img.pixels[i] + 0.1) * 30000.0), 0.0, 65535.0));
  }
  return out;
}

inline Image<double> peak_normalized(Image<double> img) {
  const double mx = *std::max_element(img.pixels.begin(), img.pixels.end());
  if (mx > 0) {
    for (auto& v : img.pixels) v /= mx;
  }
  return img;
}

/// Diffraction-limited input (wide PSF + noise) and noise-free narrow-PSF target.
struct SynthPair {
  Image<double> input, target;
  PhantomSpec truth;
};

inline SynthPair make_pair(const PhantomSpec& truth, const SynthConfig& cfg, std::uint64_t noise_seed) {
  const auto ph = render_phantom(truth);
  return {add_noise(peak_normalized(apply_gaussian_psf(ph, cfg.fwhm_wide)), cfg.poisson_scale, cfg.gaussian_sigma, noise_seed),
          peak_normalized(apply_gaussian_psf(ph, cfg.fwhm_narrow)), truth};
}

struct SynthFOV {
  data::FOVRecord record;
  PhantomSpec truth;
};

/// Pseudo-FOV i uses seed + i for its phantom; frame k's noise stream is
/// derived from that seed.
inline SynthFOV make_synth_fov(const SynthConfig& cfg, std::size_t index) {
  const std::uint64_t fov_seed = cfg.seed + index;
  SynthFOV out{{std::to_string(index), {}, {}}, sample_phantom(cfg.phantoms, cfg.height, cfg.width, fov_seed)};
  const auto ph = render_phantom(out.truth);
  const auto wide = peak_normalized(apply_gaussian_psf(ph, cfg.fwhm_wide));
  out.record.target = quantize(peak_normalized(apply_gaussian_psf(ph, cfg.fwhm_narrow)));
  for (std::size_t k = 0; k < cfg.frames_per_fov; ++k) {
    out.record.frames.push_back(
        quantize(add_noise(wide, cfg.poisson_scale, cfg.gaussian_sigma, derive_seed(fov_seed, k))));
  }
  return out;
}

inline std::vector<SynthFOV> make_synth_dataset(const SynthConfig& cfg) {
  cfg.check();
  std::vector<SynthFOV> out;
  for (std::size_t i = 0; i < cfg.fovs; ++i) out.push_back(make_synth_fov(cfg, i));
  return out;
}

inline nlohmann::ordered_json truth_json(const PhantomSpec& s) {
  nlohmann::ordered_json j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["seed"] = s.seed;
  j["emitters"] = nlohmann::ordered_json::array();
  for (const auto& e : s.emitters) j["emitters"].push_back({{"x", e.x}, {"y", e.y}, {"amplitude", e.amplitude}});
  j["filaments"] = nlohmann::ordered_json::array();
  for (const auto& f : s.filaments) j["filaments"].push_back({{"points", f.points}, {"intensity", f.intensity}});
  return j;
}

inline PhantomSpec truth_from_json(const nlohmann::json& j) {
  PhantomSpec s{j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(), {}, {}, j.at("seed").get<std::uint64_t>()};
  for (const auto& e : j.at("emitters")) s.emitters.push_back({e.at("x"), e.at("y"), e.at("amplitude")});
  for (const auto& f : j.at("filaments")) s.filaments.push_back({f.at("points"), f.at("intensity")});
  return s;
}

/// Writes the dataset layout `fov_<id>/frame_<k>.tif`, `target.tif`,
/// `truth.json`, plus `dataset.txt` recording the frame count. Returns the
/// written files relative to `root`.
inline std::vector<std::string> write_synth_dataset(const fs::path& root, const std::vector<SynthFOV>& fovs,
                                                    const data::DatasetManifest& manifest) {
  std::vector<std::string> files;
  for (const auto& f : fovs) {
    const std::string dir = "fov_" + f.record.id;
    for (std::size_t k = 0; k < f.record.frames.size(); ++k) {
      const std::string name = dir + "/frame_" + std::to_string(k) + ".tif";
      io::write_tiff16(root / name, f.record.frames[k]);
      files.push_back(name);
    }
    io::write_tiff16(root / (dir + "/target.tif"), f.record.target);
    io::write_file(root / (dir + "/truth.json"), truth_json(f.truth).dump(2) + "\n");
    files.push_back(dir + "/target.tif");
    files.push_back(dir + "/truth.json");
  }
  io::write_key_values(root / data::kDatasetManifest, manifest.to_kv());
  files.push_back(data::kDatasetManifest);
  return files;
}

/// Two equal emitters centred in the frame, `separation` apart along `angle`.
inline PhantomSpec two_point_phantom(std::size_t height, std::size_t width, double separation, double angle = 0.0,
                                     double cx_offset = 0.0, double cy_offset = 0.0) {
  const double cx = static_cast<double>(width - 1) / 2 + cx_offset, cy = static_cast<double>(height - 1) / 2 + cy_offset;
  const double dx = 0.5 * separation * std::cos(angle), dy = 0.5 * separation * std::sin(angle);
  return {height, width, {{cx - dx, cy - dy, 1.0}, {cx + dx, cy + dy, 1.0}}, {}, 0};
}

/// Separation halfway between the wide and narrow Sparrow limits: resolvable
/// in the target, not in the input.
inline double benchmark_separation(const SynthConfig& cfg) {
  return 0.5 * (sparrow_limit(cfg.fwhm_wide) + sparrow_limit(cfg.fwhm_narrow));
}

struct TwoPointCase {
  PhantomSpec truth;
  Image<std::uint16_t> input, target;
  std::array<double, 2> p0, p1;  // profile endpoints through both emitters
};

/// Seeded two-point test phantoms at `separation`, with random orientation
/// and sub-pixel centre. Profile endpoints extend `reach` px past each emitter.
inline std::vector<TwoPointCase> two_point_cases(const SynthConfig& cfg, std::size_t n, double separation,
                                                 std::uint64_t seed, double reach = 5.0) {
  std::vector<TwoPointCase> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = u(rng) * std::numbers::pi, ox = u(rng) - 0.5, oy = u(rng) - 0.5;
    auto truth = two_point_phantom(cfg.height, cfg.width, separation, th, ox, oy);
    truth.seed = derive_seed(seed, i);
    const auto pair = make_pair(truth, cfg, truth.seed);
    const auto& a = truth.emitters[0];
    const auto& b = truth.emitters[1];
    const double ux = (b.x - a.x) / separation, uy = (b.y - a.y) / separation;
    out.push_back({truth, quantize(pair.input), quantize(pair.target), {a.x - reach * ux, a.y - reach * uy},
                   {b.x + reach * ux, b.y + reach * uy}});
  }
  return out;
}

}  // namespace denseed::synth
