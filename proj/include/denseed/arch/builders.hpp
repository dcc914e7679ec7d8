#pragma once

#include <string>
#include <variant>

#include "denseed/arch/graph.hpp"
#include "denseed/arch/spec.hpp"

namespace denseed::arch {

namespace detail {

/// Appends layers to a graph while tracking the current tensor (source
/// index and channel count).
class GraphBuilder {
 public:
  GraphBuilder(std::string name, int in_channels, int out_channels) {
    graph_.name = std::move(name);
    graph_.in_channels = in_channels;
    graph_.out_channels = out_channels;
    channels_ = in_channels;
  }

  int current() const { return current_; }
  int channels() const { return channels_; }
  std::size_t size() const { return graph_.layers.size(); }

  int conv(int out, int kernel, int stride, bool bias, const std::string& label) {
    return push(LayerKind::conv, out, kernel, stride, bias, label);
  }
  int transposed_conv(int out, int kernel, int stride, bool bias, const std::string& label) {
    return push(LayerKind::transposed_conv, out, kernel, stride, bias, label);
  }
  int batch_norm(const std::string& label) { return push(LayerKind::batch_norm, channels_, 1, 1, false, label); }
  int relu(const std::string& label) { return push(LayerKind::activation, channels_, 1, 1, false, label); }

  /// BN -> ReLU -> conv, the pre-activation unit used throughout DenseED.
  int bn_relu_conv(int out, int kernel, int stride, bool transposed, const std::string& label) {
    batch_norm(label + ".bn");
    relu(label + ".relu");
    return transposed ? transposed_conv(out, kernel, stride, false, label + ".tconv")
                      : conv(out, kernel, stride, false, label + ".conv");
  }

  /// Concatenates the given tensors (channel counts supplied by caller).
  int concat(std::vector<int> sources, int channels, const std::string& label) {
    LayerSpec l;
    l.kind = LayerKind::concat;
    l.in_channels = channels;
    l.out_channels = channels;
    l.inputs = std::move(sources);
    l.label = label;
    graph_.layers.push_back(std::move(l));
    current_ = static_cast<int>(graph_.layers.size()) - 1;
    channels_ = channels;
    return current_;
  }

  void begin_block(const std::string& label) { graph_.dense_blocks.push_back({label, size(), size()}); }
  void end_block() { graph_.dense_blocks.back().end = size(); }

  NetworkGraph finish() {
    validate(graph_);
    return std::move(graph_);
  }

 private:
  int push(LayerKind kind, int out, int kernel, int stride, bool bias, const std::string& label) {
    LayerSpec l;
    l.kind = kind;
    l.in_channels = channels_;
    l.out_channels = out;
    l.kernel = kernel;
    l.stride = stride;
    l.has_bias = bias;
    l.inputs = {current_};
    l.label = label;
    l.spatial_scale = expected_scale(l);
    graph_.layers.push_back(std::move(l));
    current_ = static_cast<int>(graph_.layers.size()) - 1;
    channels_ = out;
    return current_;
  }

  NetworkGraph graph_;
  int current_ = kGraphInput;
  int channels_ = 0;
};

inline void dense_block(GraphBuilder& b, int layers, int growth, const std::string& label) {
  b.begin_block(label);
  for (int i = 0; i < layers; ++i) {
    const std::string name = label + ".layer" + std::to_string(i + 1);
    const int x0 = b.current();
    const int c0 = b.channels();
    const int x1 = b.bn_relu_conv(growth, 3, 1, false, name);
    b.concat({x0, x1}, c0 + growth, name + ".concat");
  }
  b.end_block();
}

/// Floor halving at a transition.
inline int halve(int channels, const std::string& where) {
  if (channels / 2 < 1) {
    fail(ErrorCode::unrepresentable_spec, "cannot halve " + std::to_string(channels) + " channels at " + where);
  }
  return channels / 2;
}

}  // namespace detail

/// Stem conv (k7 s2), three dense blocks, an encoding transition after the
/// first block and decoding transitions after the second and third.
inline NetworkGraph build_denseed(const DenseEDSpec& spec) {
  spec.check();
  detail::GraphBuilder b(spec.name(), spec.in_channels, spec.out_channels);
  b.conv(spec.initial_features, 7, 2, false, "stem.conv");

  detail::dense_block(b, spec.blocks[0], spec.growth_rate, "block1");
  int half = detail::halve(b.channels(), "encoder");
  b.bn_relu_conv(half, 1, 1, false, "encoder.reduce");
  b.bn_relu_conv(half, 3, 2, false, "encoder.down");

  detail::dense_block(b, spec.blocks[1], spec.growth_rate, "block2");
  half = detail::halve(b.channels(), "decoder");
  b.bn_relu_conv(half, 1, 1, false, "decoder.reduce");
  b.bn_relu_conv(half, 3, 2, true, "decoder.up");

  detail::dense_block(b, spec.blocks[2], spec.growth_rate, "block3");
  half = detail::halve(b.channels(), "final decoder");
  b.bn_relu_conv(half, 1, 1, false, "output.reduce");
  b.bn_relu_conv(spec.out_channels, 3, 2, true, "output.up");
  return b.finish();
}

inline NetworkGraph build_dncnn(const DnCNNSpec& spec) {
  require(spec.depth >= 3, ErrorCode::invalid_spec, "DnCNN depth must be >= 3");
  require(spec.width >= 1 && spec.in_channels >= 1 && spec.out_channels >= 1, ErrorCode::invalid_spec,
          "DnCNN widths must be >= 1");
  detail::GraphBuilder b(spec.name(), spec.in_channels, spec.out_channels);
  b.conv(spec.width, 3, 1, true, "stem.conv");
  b.relu("stem.relu");
  for (int i = 0; i < spec.depth - 2; ++i) {
    const std::string name = "mid" + std::to_string(i + 1);
    b.conv(spec.width, 3, 1, false, name + ".conv");
    b.batch_norm(name + ".bn");
    b.relu(name + ".relu");
  }
  b.conv(spec.out_channels, 3, 1, false, "output.conv");
  return b.finish();
}

/// Encoder of stride-2 convolutions at constant width, decoder of stride-2
/// transposed convolutions each followed by concatenation with the matching
/// encoder feature and a fusing conv. Widths never double with depth, so the
/// widest tensor is the 2*base_width concatenation.
inline NetworkGraph build_unet(const UNetSpec& spec) {
  require(spec.levels >= 1, ErrorCode::invalid_spec, "U-Net needs at least one level");
  require(spec.base_width >= 1 && spec.in_channels >= 1 && spec.out_channels >= 1, ErrorCode::invalid_spec,
          "U-Net widths must be >= 1");
  const int w = spec.base_width;
  detail::GraphBuilder b(spec.name(), spec.in_channels, spec.out_channels);
  b.conv(w, 3, 1, true, "input.conv");
  b.relu("input.relu");

  std::vector<int> skips;
  for (int i = 0; i < spec.levels; ++i) {
    const std::string name = "down" + std::to_string(i + 1);
    skips.push_back(b.current());
    b.conv(w, 3, 2, true, name + ".conv");
    b.relu(name + ".relu");
  }
  b.conv(w, 3, 1, true, "bottleneck.conv");
  b.relu("bottleneck.relu");

  for (int i = 0; i < spec.levels; ++i) {
    const std::string name = "up" + std::to_string(i + 1);
    b.transposed_conv(w, 3, 2, true, name + ".tconv");
    const int up = b.relu(name + ".relu");
    const int skip = skips[skips.size() - 1 - static_cast<std::size_t>(i)];
    b.concat({up, skip}, 2 * w, name + ".concat");
    b.conv(2 * w, 3, 1, true, name + ".fuse");
    b.relu(name + ".fuse_relu");
  }
  b.conv(spec.out_channels, 3, 1, true, "output.conv");
  return b.finish();
}

inline NetworkGraph build_linear(const LinearSpec& spec) {
  require(spec.kernel == 1 || spec.kernel == 3 || spec.kernel == 7, ErrorCode::invalid_spec,
          "kernel must be 1, 3 or 7");
  detail::GraphBuilder b(spec.name(), spec.in_channels, spec.out_channels);
  b.conv(spec.out_channels, spec.kernel, 1, spec.has_bias, "conv");
  return b.finish();
}

inline NetworkGraph build(const ArchSpec& spec) {
  struct V {
    NetworkGraph operator()(const DenseEDSpec& s) const { return build_denseed(s); }
    NetworkGraph operator()(const DnCNNSpec& s) const { return build_dncnn(s); }
    NetworkGraph operator()(const UNetSpec& s) const { return build_unet(s); }
    NetworkGraph operator()(const LinearSpec& s) const { return build_linear(s); }
  };
  return std::visit(V{}, spec);
}

}  // namespace denseed::arch
