#pragma once

#include <cmath>
#include <cstdint>

#include "denseed/tensor/params.hpp"
#include "denseed/train/config.hpp"

namespace denseed::train {

template <class T>
struct OptimizerState {
  ParameterSet<T> m, v;  // first and second moments, trainable roles only
  std::int64_t t = 0;

  static OptimizerState zeros(const arch::NetworkGraph& g) {
    return {ParameterSet<T>::zeros(g, false), ParameterSet<T>::zeros(g, false), 0};
  }
  bool operator==(const OptimizerState&) const = default;
};

/// One Adam update with coupled L2 decay (g += wd * theta before the moment
/// updates) and bias-corrected moments. Arithmetic is done in double.
template <class T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state, const TrainConfig& cfg) {
  require(params.layers.size() == grads.layers.size() && state.m.layers.size() == params.layers.size() &&
              state.v.layers.size() == params.layers.size(),
          ErrorCode::dimension, "adam_step: layer count mismatch");
  bool finite = true;
  grads.for_each_trainable([&](std::size_t, ParamRole, std::span<const T> g) { finite = finite && all_finite(g); });
  require(finite, ErrorCode::numeric, "adam_step: non-finite gradient");

  state.t += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  params.for_each_trainable([&](std::size_t layer, ParamRole role, std::span<T> theta) {
    const auto& g = grads.layers[layer].get(role);
    auto& m = state.m.layers[layer].get(role);
    auto& v = state.v.layers[layer].get(role);
    require(g.size() == theta.size() && m.size() == theta.size() && v.size() == theta.size(), ErrorCode::dimension,
            "adam_step: shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double th = static_cast<double>(theta[i]);
      const double gi = static_cast<double>(g[i]) + cfg.weight_decay * th;
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(th - cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps));
    }
  });
}

}  // namespace denseed::train
