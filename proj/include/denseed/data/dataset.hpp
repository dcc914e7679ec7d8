#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "denseed/image.hpp"
#include "denseed/io/kv.hpp"
#include "denseed/io/tiff.hpp"
#include "denseed/tensor/tensor.hpp"

namespace denseed::data {

namespace fs = std::filesystem;

inline constexpr std::size_t kFramesPerFov = 50;
inline constexpr const char* kDatasetManifest = "dataset.txt";

/// One field of view: a stack of diffraction-limited frames and the single
/// super-resolved target they all pair with.
struct FOVRecord {
  std::string id;
  std::vector<Image<std::uint16_t>> frames;
  Image<std::uint16_t> target;
};

namespace detail {

inline std::optional<std::size_t> numbered(const std::string& name, const std::regex& re) {
  std::smatch m;
  if (!std::regex_match(name, m, re)) return std::nullopt;
  std::size_t v = 0;
  const std::string s = m[1];
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

inline std::optional<fs::path> first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (fs::exists(dir / n)) return dir / n;
  }
  return std::nullopt;
}

/// Numeric ids sort numerically, anything else lexicographically after them.
inline bool id_less(const std::string& a, const std::string& b) {
  const auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  const bool na = numeric(a), nb = numeric(b);
  if (na != nb) return na;
  if (na && a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace detail

/// Loads `frame_<k>.tif` files (ordered by k) or a multi-page `frames.tif`,
/// plus `target.tif`. `expected_frames == 0` accepts any non-zero count.
inline FOVRecord load_fov(const fs::path& dir, std::size_t expected_frames = kFramesPerFov) {
  require(fs::is_directory(dir), ErrorCode::io, dir.string() + " is not a directory");
  FOVRecord rec;
  const std::string name = dir.filename().string();
  rec.id = name.rfind("fov_", 0) == 0 ? name.substr(4) : name;

  static const std::regex frame_re(R"(frame_(\d+)\.tiff?)");
  std::vector<std::pair<std::size_t, fs::path>> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (auto k = detail::numbered(e.path().filename().string(), frame_re)) files.emplace_back(*k, e.path());
  }
  std::sort(files.begin(), files.end());
  if (!files.empty()) {
    for (const auto& [k, path] : files) {
      auto pages = io::read_tiff_pages(path);
      require(pages.size() == 1, ErrorCode::malformed_fov, path.string() + " holds more than one page");
      rec.frames.push_back(std::move(pages.front()));
    }
  } else if (auto stack = detail::first_existing(dir, {"frames.tif", "frames.tiff"})) {
    rec.frames = io::read_tiff_pages(*stack);
  }
  require(!rec.frames.empty(), ErrorCode::malformed_fov, "FOV " + rec.id + " has no frames");
  if (expected_frames != 0) {
    require(rec.frames.size() == expected_frames, ErrorCode::malformed_fov,
            "FOV " + rec.id + " has " + std::to_string(rec.frames.size()) + " frames, expected " +
                std::to_string(expected_frames));
  }

  const auto target = detail::first_existing(dir, {"target.tif", "target.tiff"});
  require(target.has_value(), ErrorCode::missing_target, "FOV " + rec.id + " has no target image");
  auto pages = io::read_tiff_pages(*target);
  require(pages.size() == 1, ErrorCode::malformed_fov, "FOV " + rec.id + " target has several pages");
  rec.target = std::move(pages.front());
  for (const auto& f : rec.frames) {
    require(f.same_size(rec.target), ErrorCode::malformed_fov, "FOV " + rec.id + " frames and target differ in size");
  }
  return rec;
}

/// Optional `dataset.txt` at the dataset root: frames_per_fov, train_ids, test_ids.
struct DatasetManifest {
  std::optional<std::size_t> frames_per_fov;
  std::vector<std::string> train_ids, test_ids;

  io::KeyValues to_kv() const {
    io::KeyValues kv;
    if (frames_per_fov) kv.set("frames_per_fov", std::to_string(*frames_per_fov));
    if (!train_ids.empty()) kv.set("train_ids", io::join(train_ids));
    if (!test_ids.empty()) kv.set("test_ids", io::join(test_ids));
    return kv;
  }
  static DatasetManifest from_kv(const io::KeyValues& kv) {
    DatasetManifest m;
    if (auto v = kv.get("frames_per_fov")) {
      m.frames_per_fov = static_cast<std::size_t>(arch::detail::parse_int(*v, "frames_per_fov"));
    }
    if (auto v = kv.get("train_ids")) m.train_ids = io::split_list(*v);
    if (auto v = kv.get("test_ids")) m.test_ids = io::split_list(*v);
    return m;
  }
};

inline std::optional<DatasetManifest> read_dataset_manifest(const fs::path& root) {
  if (!fs::exists(root / kDatasetManifest)) return std::nullopt;
  return DatasetManifest::from_kv(io::read_key_values(root / kDatasetManifest));
}

/// FOV directory ids under `root` in dataset order.
inline std::vector<std::string> list_fov_ids(const fs::path& root) {
  require(fs::is_directory(root), ErrorCode::io, root.string() + " is not a directory");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root)) {
    const auto n = e.path().filename().string();
    if (e.is_directory() && n.rfind("fov_", 0) == 0) ids.push_back(n.substr(4));
  }
  std::sort(ids.begin(), ids.end(), detail::id_less);
  return ids;
}

/// Loads `fov_<id>` directories. The frame-count check uses, in order: the
/// explicit argument, the dataset manifest, then the 50-frame default.
inline std::vector<FOVRecord> load_dataset(const fs::path& root, std::optional<std::size_t> expected_frames = {},
                                           const std::vector<std::string>& only_ids = {}) {
  std::size_t expected = kFramesPerFov;
  if (expected_frames) expected = *expected_frames;
  else if (auto m = read_dataset_manifest(root); m && m->frames_per_fov) expected = *m->frames_per_fov;
  const auto ids = list_fov_ids(root);
  for (const auto& id : only_ids) {
    require(std::find(ids.begin(), ids.end(), id) != ids.end(), ErrorCode::unknown_id, "no FOV with id " + id);
  }
  std::vector<FOVRecord> out;
  for (const auto& id : ids) {
    if (!only_ids.empty() && std::find(only_ids.begin(), only_ids.end(), id) == only_ids.end()) continue;
    out.push_back(load_fov(root / ("fov_" + id), expected));
  }
  require(!out.empty(), ErrorCode::io, "no fov_<id> directories under " + root.string());
  return out;
}

inline std::size_t total_frames(const std::vector<FOVRecord>& records) {
  std::size_t n = 0;
  for (const auto& r : records) n += r.frames.size();
  return n;
}

// ---- normalization ----

struct Normalization {
  enum class Kind { minmax, percentile } kind = Kind::minmax;
  double p_lo = 1.0, p_hi = 99.0;  // percentile variant only

  std::string str() const {
    if (kind == Kind::minmax) return "minmax";
    return "percentile:" + io::join({trimmed(p_lo), trimmed(p_hi)});
  }
  static Normalization parse(const std::string& text) {
    if (text == "minmax") return {};
    require(text.rfind("percentile:", 0) == 0, ErrorCode::invalid_argument,
            "normalization must be 'minmax' or 'percentile:<lo>,<hi>'");
    const auto parts = io::split_list(text.substr(11));
    require(parts.size() == 2, ErrorCode::invalid_argument, "percentile normalization needs two values");
    Normalization n{Kind::percentile, std::stod(parts[0]), std::stod(parts[1])};
    require(n.p_lo >= 0 && n.p_lo < n.p_hi && n.p_hi <= 100, ErrorCode::invalid_argument, "need 0 <= lo < hi <= 100");
    return n;
  }

 private:
  static std::string trimmed(double v) {
    std::string s = std::to_string(v);
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    return s;
  }
};

namespace detail {

template <class T>
double percentile(std::vector<T> v, double p) {
  const auto rank = static_cast<std::size_t>(std::llround(p / 100.0 * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank), v.end());
  return static_cast<double>(v[rank]);
}

}  // namespace detail

/// Maps an image to [0,1]: minmax uses (x-min)/(max-min); percentile clips to
/// the [p_lo, p_hi] percentiles first. A constant range maps to all zeros.
template <class T>
Image<float> normalize(const Image<T>& img, const Normalization& norm = {}) {
  require(!img.empty(), ErrorCode::invalid_argument, "cannot normalize an empty image");
  double lo, hi;
  if (norm.kind == Normalization::Kind::minmax) {
    const auto [mn, mx] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    lo = static_cast<double>(*mn);
    hi = static_cast<double>(*mx);
  } else {
    lo = detail::percentile(img.pixels, norm.p_lo);
    hi = detail::percentile(img.pixels, norm.p_hi);
  }
  Image<float> out(img.height, img.width);
  if (!(hi > lo)) return out;
  const double scale = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double x = std::clamp(static_cast<double>(img.pixels[i]), lo, hi);
    out.pixels[i] = static_cast<float>((x - lo) * scale);
  }
  return out;
}

// ---- quadrant patches ----

enum class Quadrant : std::uint8_t { top_left, top_right, bottom_left, bottom_right };
inline constexpr std::array<Quadrant, 4> kQuadrants = {Quadrant::top_left, Quadrant::top_right, Quadrant::bottom_left,
                                                      Quadrant::bottom_right};

struct PatchSource {
  std::string fov;
  std::size_t frame = 0;
  Quadrant quadrant = Quadrant::top_left;
  bool operator==(const PatchSource&) const = default;
};

template <class T>
struct Patch {
  Image<T> image;
  PatchSource source;
};

/// Splits an even-sized image into its four quadrants, in the order
/// top-left, top-right, bottom-left, bottom-right.
template <class T>
std::vector<Patch<T>> slice_quadrants(const Image<T>& img, const std::string& fov = {}, std::size_t frame = 0) {
  require(img.height >= 2 && img.width >= 2 && img.height % 2 == 0 && img.width % 2 == 0, ErrorCode::dimension,
          "image " + std::to_string(img.height) + "x" + std::to_string(img.width) + " does not split into quadrants");
  const std::size_t h = img.height / 2, w = img.width / 2;
  std::vector<Patch<T>> out;
  for (Quadrant q : kQuadrants) {
    const std::size_t y0 = (q == Quadrant::bottom_left || q == Quadrant::bottom_right) ? h : 0;
    const std::size_t x0 = (q == Quadrant::top_right || q == Quadrant::bottom_right) ? w : 0;
    Patch<T> p{Image<T>(h, w), {fov, frame, q}};
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(&img.at(y0 + y, x0), w, &p.image.at(y, 0));
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Inverse of slice_quadrants. Needs exactly one patch per quadrant, all of
/// the same size and source image.
template <class T>
Image<T> reassemble_quadrants(std::span<const Patch<T>> patches) {
  require(patches.size() == 4, ErrorCode::bad_quadrants,
          "need 4 quadrants, got " + std::to_string(patches.size()));
  std::array<const Patch<T>*, 4> slot{};
  for (const auto& p : patches) {
    auto& s = slot[static_cast<std::size_t>(p.source.quadrant)];
    require(s == nullptr, ErrorCode::bad_quadrants, "duplicate quadrant");
    require(p.source.fov == patches[0].source.fov && p.source.frame == patches[0].source.frame, ErrorCode::bad_quadrants,
            "quadrants come from different source images");
    require(p.image.same_size(patches[0].image) && !p.image.empty(), ErrorCode::bad_quadrants,
            "quadrants differ in size");
    s = &p;
  }
  const std::size_t h = patches[0].image.height, w = patches[0].image.width;
  Image<T> out(2 * h, 2 * w);
  for (Quadrant q : kQuadrants) {
    const auto& img = slot[static_cast<std::size_t>(q)]->image;
    const std::size_t y0 = (q == Quadrant::bottom_left || q == Quadrant::bottom_right) ? h : 0;
    const std::size_t x0 = (q == Quadrant::top_right || q == Quadrant::bottom_right) ? w : 0;
    for (std::size_t y = 0; y < h; ++y) std::copy_n(&img.at(y, 0), w, &out.at(y0 + y, x0));
  }
  return out;
}

template <class T>
Image<T> reassemble_quadrants(const std::vector<Patch<T>>& patches) {
  return reassemble_quadrants(std::span<const Patch<T>>(patches));
}

/// Aligned (input, target) quadrant. Targets are shared between all frames
/// of a FOV rather than copied.
struct PatchPair {
  Image<float> input;
  std::shared_ptr<const Image<float>> target;
  PatchSource source;
};

struct PatchSet {
  std::vector<PatchPair> patches;
  std::size_t size() const { return patches.size(); }
  bool empty() const { return patches.empty(); }
};

inline PatchSet slice_patches(const Image<float>& input, const Image<float>& target, const std::string& fov = {},
                              std::size_t frame = 0) {
  require(input.same_size(target), ErrorCode::dimension, "input and target differ in size");
  auto in = slice_quadrants(input, fov, frame);
  auto tg = slice_quadrants(target, fov, frame);
  PatchSet set;
  for (std::size_t i = 0; i < 4; ++i) {
    set.patches.push_back({std::move(in[i].image), std::make_shared<const Image<float>>(std::move(tg[i].image)),
                           in[i].source});
  }
  return set;
}

/// Reassembles the inputs (or targets) of one source image's four patches.
inline Image<float> reassemble_patches(const PatchSet& set, bool targets = false) {
  std::vector<Patch<float>> q;
  for (const auto& p : set.patches) q.push_back({targets ? *p.target : p.input, p.source});
  return reassemble_quadrants(q);
}

/// Normalized, sliced patches of every frame of the selected FOVs, paired
/// with the FOV's target.
inline PatchSet build_patch_set(const std::vector<FOVRecord>& records, const std::vector<std::string>& ids,
                                const Normalization& norm = {}) {
  PatchSet set;
  for (const auto& rec : records) {
    if (std::find(ids.begin(), ids.end(), rec.id) == ids.end()) continue;
    auto targets = slice_quadrants(normalize(rec.target, norm), rec.id);
    std::array<std::shared_ptr<const Image<float>>, 4> shared;
    for (std::size_t q = 0; q < 4; ++q) shared[q] = std::make_shared<const Image<float>>(std::move(targets[q].image));
    for (std::size_t f = 0; f < rec.frames.size(); ++f) {
      auto inputs = slice_quadrants(normalize(rec.frames[f], norm), rec.id, f);
      for (std::size_t q = 0; q < 4; ++q) set.patches.push_back({std::move(inputs[q].image), shared[q], inputs[q].source});
    }
  }
  return set;
}

// ---- splits ----

struct DatasetSplit {
  std::vector<std::string> train_ids, test_ids;
};

/// Every FOV not named in `train_ids` goes to the test side.
inline DatasetSplit split_by_fov(const std::vector<std::string>& available, const std::vector<std::string>& train_ids,
                                 bool require_test = true) {
  std::set<std::string> seen;
  for (const auto& id : train_ids) {
    require(std::find(available.begin(), available.end(), id) != available.end(), ErrorCode::unknown_id,
            "unknown FOV id " + id);
    require(seen.insert(id).second, ErrorCode::invalid_argument, "FOV id " + id + " listed twice");
  }
  require(!train_ids.empty(), ErrorCode::empty_training_set, "no training FOVs selected");
  DatasetSplit s;
  for (const auto& id : available) {
    (seen.count(id) ? s.train_ids : s.test_ids).push_back(id);
  }
  require(!require_test || !s.test_ids.empty(), ErrorCode::empty_test, "every FOV is in the training set");
  return s;
}

inline DatasetSplit split_by_fov(const std::vector<FOVRecord>& records, const std::vector<std::string>& train_ids,
                                 bool require_test = true) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  return split_by_fov(ids, train_ids, require_test);
}

// ---- batches ----

/// Index batches for one epoch: a seeded shuffle cut into runs of
/// `batch_size`. The final short batch is kept.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  require(batch_size >= 1, ErrorCode::invalid_argument, "batch size must be at least 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

inline Tensor<float> stack_images(const std::vector<const Image<float>*>& images) {
  require(!images.empty(), ErrorCode::invalid_argument, "empty batch");
  Tensor<float> t(images.size(), 1, images[0]->height, images[0]->width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i]->same_size(*images[0]), ErrorCode::dimension, "batch images differ in size");
    std::copy(images[i]->pixels.begin(), images[i]->pixels.end(), t.sample(i));
  }
  return t;
}

inline std::pair<Tensor<float>, Tensor<float>> make_batch(const PatchSet& set, std::span<const std::size_t> idx) {
  std::vector<const Image<float>*> in, tg;
  for (auto i : idx) {
    in.push_back(&set.patches.at(i).input);
    tg.push_back(set.patches.at(i).target.get());
  }
  return {stack_images(in), stack_images(tg)};
}

inline Image<float> tensor_to_image(const Tensor<float>& t, std::size_t sample = 0) {
  Image<float> img(t.h(), t.w());
  std::copy_n(t.sample(sample), t.plane(), img.pixels.data());
  return img;
}

}  // namespace denseed::data
