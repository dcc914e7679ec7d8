#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "denseed/error.hpp"

namespace denseed::arch {

/// Output/input side-length ratio of a layer, kept as a reduced fraction.
struct SpatialScale {
  std::int64_t num = 1;
  std::int64_t den = 1;

  static constexpr SpatialScale identity() { return {1, 1}; }
  static constexpr SpatialScale half() { return {1, 2}; }
  static constexpr SpatialScale twice() { return {2, 1}; }

  SpatialScale operator*(const SpatialScale& o) const {
    SpatialScale r{num * o.num, den * o.den};
    const auto g = std::gcd(r.num, r.den);
    return {r.num / g, r.den / g};
  }
  bool operator==(const SpatialScale&) const = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

enum class LayerKind { conv, transposed_conv, batch_norm, activation, concat };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::transposed_conv: return "transposed-conv";
    case LayerKind::batch_norm: return "batch-norm";
    case LayerKind::activation: return "activation";
    case LayerKind::concat: return "concat-input";
  }
  return "?";
}

/// Marks the graph input when used as a layer source.
inline constexpr int kGraphInput = -1;

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  bool has_bias = false;
  SpatialScale spatial_scale{};
  // Earlier layers (or kGraphInput) feeding this one. Concat joins them in
  // the listed order along the channel axis; every other kind has one source.
  std::vector<int> inputs;
  std::string label;

  bool is_conv() const { return kind == LayerKind::conv || kind == LayerKind::transposed_conv; }
  int padding() const { return kernel / 2; }
};

struct BlockRange {
  std::string label;
  std::size_t begin = 0;  // first layer index
  std::size_t end = 0;    // one past the last layer index
};

struct NetworkGraph {
  std::string name;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<LayerSpec> layers;
  std::vector<BlockRange> dense_blocks;
};

inline SpatialScale expected_scale(const LayerSpec& l) {
  if (l.kind == LayerKind::conv && l.stride == 2) return SpatialScale::half();
  if (l.kind == LayerKind::transposed_conv && l.stride == 2) return SpatialScale::twice();
  return SpatialScale::identity();
}

/// Trainable parameter count of one layer. Batch-norm counts scale and shift
/// only; running statistics are buffers.
inline std::int64_t layer_parameter_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::transposed_conv: {
      std::int64_t n = std::int64_t{l.in_channels} * l.out_channels * l.kernel * l.kernel;
      if (l.has_bias) n += l.out_channels;
      return n;
    }
    case LayerKind::batch_norm: return 2 * std::int64_t{l.out_channels};
    case LayerKind::activation:
    case LayerKind::concat: return 0;
  }
  return 0;
}

/// Per-layer cumulative scale relative to the graph input, after validation
/// of channel chaining and concat shape agreement.
inline std::vector<SpatialScale> validate(const NetworkGraph& g) {
  const auto bad = [&](std::size_t i, const std::string& why) {
    fail(ErrorCode::inconsistent_graph,
         g.name + ": layer " + std::to_string(i) + " (" + g.layers[i].label + "): " + why);
  };
  require(!g.layers.empty(), ErrorCode::inconsistent_graph, g.name + ": empty graph");
  std::vector<SpatialScale> scale(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (l.inputs.empty()) bad(i, "no inputs");
    if (l.kind != LayerKind::concat && l.inputs.size() != 1) bad(i, "expected exactly one input");
    if (l.in_channels <= 0 || l.out_channels <= 0) bad(i, "non-positive channel count");
    if (l.stride != 1 && l.stride != 2) bad(i, "stride must be 1 or 2");
    if (l.kernel != 1 && l.kernel != 3 && l.kernel != 7) bad(i, "kernel must be 1, 3 or 7");
    if (!(l.spatial_scale == expected_scale(l))) bad(i, "spatial scale does not match kind/stride");
    if (!l.is_conv() && l.stride != 1) bad(i, "only convolutions may stride");

    int in_sum = 0;
    SpatialScale in_scale{};
    for (std::size_t s = 0; s < l.inputs.size(); ++s) {
      const int src = l.inputs[s];
      if (src != kGraphInput && (src < 0 || static_cast<std::size_t>(src) >= i)) bad(i, "input is not an earlier layer");
      const int ch = src == kGraphInput ? g.in_channels : g.layers[static_cast<std::size_t>(src)].out_channels;
      const SpatialScale sc = src == kGraphInput ? SpatialScale::identity() : scale[static_cast<std::size_t>(src)];
      if (s == 0) {
        in_scale = sc;
      } else if (!(sc == in_scale)) {
        bad(i, "concatenated inputs have different spatial sizes");
      }
      in_sum += ch;
    }
    if (l.in_channels != in_sum) {
      bad(i, "in_channels " + std::to_string(l.in_channels) + " != producer channels " + std::to_string(in_sum));
    }
    if (!l.is_conv() && l.out_channels != l.in_channels) bad(i, "non-convolution layers preserve channels");
    scale[i] = in_scale * l.spatial_scale;
  }
  if (g.layers.back().out_channels != g.out_channels) {
    fail(ErrorCode::inconsistent_graph, g.name + ": final layer does not produce out_channels");
  }
  if (!(scale.back() == SpatialScale::identity())) {
    fail(ErrorCode::inconsistent_graph, g.name + ": composed spatial scale is not 1");
  }
  return scale;
}

/// Largest power-of-two factor the input side must be divisible by.
inline int required_divisor(const NetworkGraph& g) {
  const auto scales = validate(g);
  std::int64_t d = 1;
  for (const auto& s : scales) d = std::max(d, s.den);
  return static_cast<int>(d);
}

}  // namespace denseed::arch
