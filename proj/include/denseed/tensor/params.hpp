#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "denseed/arch/graph.hpp"

namespace denseed {

enum class ParamRole { weight, bias, scale, shift, running_mean, running_var };

inline std::string_view to_string(ParamRole r) {
  switch (r) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    case ParamRole::scale: return "scale";
    case ParamRole::shift: return "shift";
    case ParamRole::running_mean: return "running_mean";
    case ParamRole::running_var: return "running_var";
  }
  return "?";
}

inline bool is_trainable(ParamRole r) { return r != ParamRole::running_mean && r != ParamRole::running_var; }

/// Shape of one parameter array, derived from the layer alone. Convolution
/// weights are [out, in, k, k]; transposed convolutions store [in, out, k, k].
/// Roles that a layer does not carry have an empty shape.
inline std::vector<std::size_t> param_shape(const arch::LayerSpec& l, ParamRole role) {
  using arch::LayerKind;
  const auto in = static_cast<std::size_t>(l.in_channels);
  const auto out = static_cast<std::size_t>(l.out_channels);
  const auto k = static_cast<std::size_t>(l.kernel);
  switch (l.kind) {
    case LayerKind::conv:
      if (role == ParamRole::weight) return {out, in, k, k};
      if (role == ParamRole::bias && l.has_bias) return {out};
      return {};
    case LayerKind::transposed_conv:
      if (role == ParamRole::weight) return {in, out, k, k};
      if (role == ParamRole::bias && l.has_bias) return {out};
      return {};
    case LayerKind::batch_norm:
      if (role == ParamRole::weight || role == ParamRole::bias) return {};
      return {out};
    case LayerKind::activation:
    case LayerKind::concat: return {};
  }
  return {};
}

inline std::size_t shape_size(const std::vector<std::size_t>& s) {
  if (s.empty()) return 0;
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline constexpr ParamRole kAllRoles[] = {ParamRole::weight,       ParamRole::bias,       ParamRole::scale,
                                         ParamRole::shift,        ParamRole::running_mean, ParamRole::running_var};

template <class T>
struct LayerParameters {
  std::vector<T> weight, bias, scale, shift;
  std::vector<T> running_mean, running_var;  // batch-norm buffers, not trainable

  std::vector<T>& get(ParamRole r) {
    switch (r) {
      case ParamRole::weight: return weight;
      case ParamRole::bias: return bias;
      case ParamRole::scale: return scale;
      case ParamRole::shift: return shift;
      case ParamRole::running_mean: return running_mean;
      case ParamRole::running_var: return running_var;
    }
    return weight;
  }
  const std::vector<T>& get(ParamRole r) const { return const_cast<LayerParameters*>(this)->get(r); }
  bool operator==(const LayerParameters&) const = default;
};

/// Per-layer parameter arrays indexed by layer position in the graph. The
/// same structure holds gradients and optimizer moments (buffers unused).
template <class T>
class ParameterSet {
 public:
  std::vector<LayerParameters<T>> layers;

  /// Zero-filled arrays with the shapes the graph implies.
  static ParameterSet zeros(const arch::NetworkGraph& g, bool with_buffers = true) {
    ParameterSet p;
    p.layers.resize(g.layers.size());
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      for (ParamRole r : kAllRoles) {
        if (!with_buffers && !is_trainable(r)) continue;
        p.layers[i].get(r).assign(shape_size(param_shape(g.layers[i], r)), T(0));
      }
    }
    return p;
  }

  /// Number of trainable scalars; equals arch::count_parameters for the graph.
  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += static_cast<std::int64_t>(l.weight.size() + l.bias.size() + l.scale.size() + l.shift.size());
    return n;
  }

  /// Visits trainable arrays in a fixed order: layer, then weight/bias/scale/shift.
  template <class F>
  void for_each_trainable(F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (ParamRole r : {ParamRole::weight, ParamRole::bias, ParamRole::scale, ParamRole::shift}) {
        auto& v = layers[i].get(r);
        if (!v.empty()) f(i, r, std::span<T>(v));
      }
    }
  }
  template <class F>
  void for_each_trainable(F&& f) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (ParamRole r : {ParamRole::weight, ParamRole::bias, ParamRole::scale, ParamRole::shift}) {
        const auto& v = layers[i].get(r);
        if (!v.empty()) f(i, r, std::span<const T>(v));
      }
    }
  }

  /// Checks every array against the shapes implied by the graph.
  void check_shapes(const arch::NetworkGraph& g) const {
    require(layers.size() == g.layers.size(), ErrorCode::dimension, "parameter set has wrong layer count");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (ParamRole r : kAllRoles) {
        if (layers[i].get(r).size() != shape_size(param_shape(g.layers[i], r))) {
          fail(ErrorCode::dimension, "layer " + std::to_string(i) + " " + std::string(to_string(r)) + " has wrong size");
        }
      }
    }
  }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    out.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (ParamRole r : kAllRoles) {
        const auto& src = layers[i].get(r);
        out.layers[i].get(r).assign(src.begin(), src.end());
      }
    }
    return out;
  }

  bool operator==(const ParameterSet&) const = default;
};

/// Fan-in scaled uniform initialization, U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
/// For a stride-s transposed convolution each output pixel sees about
/// in*k*k/s^2 inputs, which is used as its fan-in. Biases and BN shifts start
/// at 0, BN scales and running variances at 1.
template <class T>
ParameterSet<T> initialize(const arch::NetworkGraph& g, std::uint64_t seed) {
  auto p = ParameterSet<T>::zeros(g);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    auto& lp = p.layers[i];
    if (l.is_conv()) {
      double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
      if (l.kind == arch::LayerKind::transposed_conv) fan_in /= static_cast<double>(l.stride * l.stride);
      const double bound = std::sqrt(6.0 / std::max(fan_in, 1.0));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& w : lp.weight) w = static_cast<T>(dist(rng));
    } else if (l.kind == arch::LayerKind::batch_norm) {
      std::fill(lp.scale.begin(), lp.scale.end(), T(1));
      std::fill(lp.running_var.begin(), lp.running_var.end(), T(1));
    }
  }
  return p;
}

}  // namespace denseed
