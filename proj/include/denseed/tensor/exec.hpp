#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <type_traits>
#include <vector>

#include "denseed/arch/graph.hpp"
#include "denseed/tensor/ops.hpp"
#include "denseed/tensor/params.hpp"
#include "denseed/tensor/tensor.hpp"

namespace denseed {

enum class Mode { train, eval };

/// Whether a training-mode pass folds its batch statistics into the
/// running mean/variance.
enum class RunningStats { keep, update };

template <class T>
struct ForwardCache {
  std::vector<Tensor<T>> outputs;
  std::vector<std::vector<T>> bn_mean;
  std::vector<std::vector<T>> bn_invstd;
};

namespace detail {

template <class T>
const Tensor<T>& source(const Tensor<T>& input, const ForwardCache<T>& cache, int src) {
  return src == arch::kGraphInput ? input : cache.outputs[static_cast<std::size_t>(src)];
}

template <class T>
void check_input(const arch::NetworkGraph& g, const Tensor<T>& batch) {
  require(batch.c() == static_cast<std::size_t>(g.in_channels), ErrorCode::dimension,
          "batch has " + std::to_string(batch.c()) + " channels, graph expects " + std::to_string(g.in_channels));
  require(batch.n() >= 1 && batch.h() >= 1 && batch.w() >= 1, ErrorCode::dimension, "empty batch");
  const auto d = static_cast<std::size_t>(arch::required_divisor(g));
  require(batch.h() % d == 0 && batch.w() % d == 0, ErrorCode::dimension,
          "spatial size " + std::to_string(batch.h()) + "x" + std::to_string(batch.w()) + " not divisible by " +
              std::to_string(d));
}

template <class T>
void batch_norm_forward(const Tensor<T>& x, const LayerParameters<T>& p, Mode mode, Tensor<T>& y,
                        std::vector<T>& mean_out, std::vector<T>& invstd_out, LayerParameters<T>* running) {
  const std::size_t C = x.c(), N = x.n(), P = x.plane();
  y = Tensor<T>(N, C, x.h(), x.w());
  mean_out.assign(C, T(0));
  invstd_out.assign(C, T(0));
  const double eps = ops::kBatchNormEps;
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      const double m = static_cast<double>(N * P);
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = x.channel(n, c);
        for (std::size_t i = 0; i < P; ++i) mean += static_cast<double>(src[i]);
      }
      mean /= m;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = x.channel(n, c);
        for (std::size_t i = 0; i < P; ++i) {
          const double d = static_cast<double>(src[i]) - mean;
          var += d * d;
        }
      }
      var /= m;
      if (running != nullptr) {
        const double mom = ops::kBatchNormMomentum;
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        running->running_mean[c] = static_cast<T>((1 - mom) * running->running_mean[c] + mom * mean);
        running->running_var[c] = static_cast<T>((1 - mom) * running->running_var[c] + mom * unbiased);
      }
    } else {
      mean = static_cast<double>(p.running_mean[c]);
      var = static_cast<double>(p.running_var[c]);
    }
    const double invstd = 1.0 / std::sqrt(var + eps);
    mean_out[c] = static_cast<T>(mean);
    invstd_out[c] = static_cast<T>(invstd);
    const T a = static_cast<T>(static_cast<double>(p.scale[c]) * invstd);
    const T b = static_cast<T>(static_cast<double>(p.shift[c]) - static_cast<double>(p.scale[c]) * invstd * mean);
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = x.channel(n, c);
      T* dst = y.channel(n, c);
      for (std::size_t i = 0; i < P; ++i) dst[i] = a * src[i] + b;
    }
  }
}

template <class T>
void batch_norm_backward(const Tensor<T>& x, const LayerParameters<T>& p, const std::vector<T>& mean,
                         const std::vector<T>& invstd, const Tensor<T>& dy, Tensor<T>& dx, LayerParameters<T>& grad) {
  const std::size_t C = x.c(), N = x.n(), P = x.plane();
  const double m = static_cast<double>(N * P);
  for (std::size_t c = 0; c < C; ++c) {
    const double mu = static_cast<double>(mean[c]);
    const double is = static_cast<double>(invstd[c]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* xs = x.channel(n, c);
      const T* g = dy.channel(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        const double xhat = (static_cast<double>(xs[i]) - mu) * is;
        sum_dy += static_cast<double>(g[i]);
        sum_dy_xhat += static_cast<double>(g[i]) * xhat;
      }
    }
    grad.scale[c] += static_cast<T>(sum_dy_xhat);
    grad.shift[c] += static_cast<T>(sum_dy);
    const double k = static_cast<double>(p.scale[c]) * is / m;
    for (std::size_t n = 0; n < N; ++n) {
      const T* xs = x.channel(n, c);
      const T* g = dy.channel(n, c);
      T* out = dx.channel(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        const double xhat = (static_cast<double>(xs[i]) - mu) * is;
        out[i] += static_cast<T>(k * (m * static_cast<double>(g[i]) - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
}

/// Runs the graph, filling `cache` with every layer output.
template <class T>
void run_forward(const arch::NetworkGraph& g, const ParameterSet<T>& params, const Tensor<T>& batch, Mode mode,
                 ForwardCache<T>& cache, std::type_identity_t<ParameterSet<T>>* running) {
  using arch::LayerKind;
  check_input(g, batch);
  params.check_shapes(g);
  require(all_finite(batch.values()), ErrorCode::numeric, "non-finite value in input batch");
  const std::size_t L = g.layers.size();
  cache.outputs.assign(L, Tensor<T>{});
  cache.bn_mean.assign(L, {});
  cache.bn_invstd.assign(L, {});
  std::vector<T> scratch;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& l = g.layers[i];
    const auto& p = params.layers[i];
    const Tensor<T>& x = source(batch, cache, l.inputs[0]);
    Tensor<T>& y = cache.outputs[i];
    const std::size_t N = x.n();
    switch (l.kind) {
      case LayerKind::conv: {
        const auto geo = ops::conv_geometry(x.c(), x.h(), x.w(), static_cast<std::size_t>(l.kernel),
                                            static_cast<std::size_t>(l.stride));
        y = Tensor<T>(N, static_cast<std::size_t>(l.out_channels), geo.out_h, geo.out_w);
        for (std::size_t n = 0; n < N; ++n) {
          ops::conv_forward<T>(x.sample(n), geo, y.c(), p.weight, p.bias, y.sample(n), scratch);
        }
        break;
      }
      case LayerKind::transposed_conv: {
        const auto geo = ops::transposed_geometry(static_cast<std::size_t>(l.out_channels), x.h(), x.w(),
                                                  static_cast<std::size_t>(l.kernel), static_cast<std::size_t>(l.stride));
        y = Tensor<T>(N, geo.channels, geo.height, geo.width);
        for (std::size_t n = 0; n < N; ++n) {
          ops::tconv_forward<T>(x.sample(n), x.c(), geo, p.weight, p.bias, y.sample(n), scratch);
        }
        break;
      }
      case LayerKind::batch_norm: {
        LayerParameters<T>* run = running != nullptr ? &running->layers[i] : nullptr;
        batch_norm_forward(x, p, mode, y, cache.bn_mean[i], cache.bn_invstd[i], run);
        break;
      }
      case LayerKind::activation: {
        y = x;
        for (T& v : y.values()) v = v > T(0) ? v : T(0);
        break;
      }
      case LayerKind::concat: {
        std::size_t channels = 0;
        for (int s : l.inputs) channels += source(batch, cache, s).c();
        y = Tensor<T>(N, channels, x.h(), x.w());
        for (std::size_t n = 0; n < N; ++n) {
          T* dst = y.sample(n);
          for (int s : l.inputs) {
            const Tensor<T>& part = source(batch, cache, s);
            const std::size_t len = part.c() * part.plane();
            std::copy(part.sample(n), part.sample(n) + len, dst);
            dst += len;
          }
        }
        break;
      }
    }
    if (!all_finite(y.values())) {
      fail(ErrorCode::numeric, "non-finite activation at layer " + std::to_string(i) + " (" + l.label + ")");
    }
  }
}

}  // namespace detail

/// Forward pass. Training mode normalizes with batch statistics and folds
/// them into `params`' running statistics; evaluation mode uses the running
/// statistics and leaves `params` untouched.
template <class T>
Tensor<T> forward(const arch::NetworkGraph& g, ParameterSet<T>& params, const Tensor<T>& batch, Mode mode) {
  ForwardCache<T> cache;
  detail::run_forward(g, params, batch, mode, cache, mode == Mode::train ? &params : nullptr);
  return std::move(cache.outputs.back());
}

/// Evaluation-mode inference; safe to call concurrently on shared parameters.
template <class T>
Tensor<T> predict(const arch::NetworkGraph& g, const ParameterSet<T>& params, const Tensor<T>& batch) {
  ForwardCache<T> cache;
  detail::run_forward(g, params, batch, Mode::eval, cache, nullptr);
  return std::move(cache.outputs.back());
}

/// Mean over all elements of the squared difference.
template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.same_shape(target), ErrorCode::dimension,
          "mse_loss shape mismatch " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  require(pred.size() > 0, ErrorCode::dimension, "mse_loss of empty tensors");
  long double s = 0.0L;
  const T* a = pred.data();
  const T* b = target.data();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    s += d * d;
  }
  return static_cast<double>(s / static_cast<long double>(pred.size()));
}

template <class T>
struct GradientResult {
  double loss = 0.0;
  Tensor<T> prediction;
  ParameterSet<T> gradients;
};

namespace detail {

template <class T>
GradientResult<T> run_backward(const arch::NetworkGraph& g, const ParameterSet<T>& params, const Tensor<T>& batch,
                               const Tensor<T>& target, std::type_identity_t<ParameterSet<T>>* running) {
  using arch::LayerKind;
  ForwardCache<T> cache;
  run_forward(g, params, batch, Mode::train, cache, running);
  GradientResult<T> result;
  result.prediction = cache.outputs.back();
  result.loss = mse_loss(result.prediction, target);
  result.gradients = ParameterSet<T>::zeros(g, false);

  const std::size_t L = g.layers.size();
  std::vector<Tensor<T>> grads(L);
  {
    Tensor<T>& d = grads[L - 1];
    d = Tensor<T>(target.n(), target.c(), target.h(), target.w());
    const T scale = static_cast<T>(2.0 / static_cast<double>(target.size()));
    const T* p = result.prediction.data();
    const T* t = target.data();
    T* out = d.data();
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = scale * (p[i] - t[i]);
  }
  // Gradient buffer of a layer output, created on first use.
  const auto grad_of = [&](int src) -> Tensor<T>* {
    if (src == arch::kGraphInput) return nullptr;
    auto& gt = grads[static_cast<std::size_t>(src)];
    if (gt.empty()) {
      const auto& o = cache.outputs[static_cast<std::size_t>(src)];
      gt = Tensor<T>(o.n(), o.c(), o.h(), o.w());
    }
    return &gt;
  };

  std::vector<T> scratch;
  for (std::size_t ii = L; ii-- > 0;) {
    if (grads[ii].empty()) continue;
    const auto& l = g.layers[ii];
    const auto& p = params.layers[ii];
    auto& gp = result.gradients.layers[ii];
    const Tensor<T>& dy = grads[ii];
    const Tensor<T>& x = source(batch, cache, l.inputs[0]);
    const std::size_t N = x.n();
    switch (l.kind) {
      case LayerKind::conv: {
        Tensor<T>* dx = grad_of(l.inputs[0]);
        const auto geo = ops::conv_geometry(x.c(), x.h(), x.w(), static_cast<std::size_t>(l.kernel),
                                            static_cast<std::size_t>(l.stride));
        for (std::size_t n = 0; n < N; ++n) {
          ops::conv_backward<T>(x.sample(n), geo, dy.c(), p.weight, dy.sample(n), dx ? dx->sample(n) : nullptr,
                                gp.weight, gp.bias, scratch);
        }
        break;
      }
      case LayerKind::transposed_conv: {
        Tensor<T>* dx = grad_of(l.inputs[0]);
        const auto geo = ops::transposed_geometry(dy.c(), x.h(), x.w(), static_cast<std::size_t>(l.kernel),
                                                  static_cast<std::size_t>(l.stride));
        for (std::size_t n = 0; n < N; ++n) {
          ops::tconv_backward<T>(x.sample(n), x.c(), geo, p.weight, dy.sample(n), dx ? dx->sample(n) : nullptr,
                                 gp.weight, gp.bias, scratch);
        }
        break;
      }
      case LayerKind::batch_norm: {
        Tensor<T>* dx = grad_of(l.inputs[0]);
        Tensor<T> sink;
        if (dx == nullptr) {
          sink = Tensor<T>(x.n(), x.c(), x.h(), x.w());
          dx = &sink;
        }
        batch_norm_backward(x, p, cache.bn_mean[ii], cache.bn_invstd[ii], dy, *dx, gp);
        break;
      }
      case LayerKind::activation: {
        Tensor<T>* dx = grad_of(l.inputs[0]);
        if (dx == nullptr) break;
        const T* xv = x.data();
        const T* g = dy.data();
        T* out = dx->data();
        for (std::size_t i = 0; i < dy.size(); ++i) out[i] += xv[i] > T(0) ? g[i] : T(0);
        break;
      }
      case LayerKind::concat: {
        for (std::size_t n = 0; n < N; ++n) {
          const T* src = dy.sample(n);
          for (int s : l.inputs) {
            const std::size_t len = source(batch, cache, s).c() * x.plane();
            if (Tensor<T>* dx = grad_of(s)) {
              T* dst = dx->sample(n);
              for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
            }
            src += len;
          }
        }
        break;
      }
    }
    grads[ii] = Tensor<T>{};
    cache.outputs[ii] = Tensor<T>{};
  }
  bool finite = true;
  result.gradients.for_each_trainable([&](std::size_t, ParamRole, std::span<const T> v) { finite = finite && all_finite(v); });
  require(finite, ErrorCode::numeric, "non-finite gradient");
  return result;
}

}  // namespace detail

/// Gradient of mse_loss(forward(batch), target) with respect to every
/// trainable parameter, using training-mode batch statistics. Running
/// statistics are not modified.
template <class T>
GradientResult<T> backward(const arch::NetworkGraph& g, const ParameterSet<T>& params, const Tensor<T>& batch,
                           const Tensor<T>& target) {
  return detail::run_backward<T>(g, params, batch, target, nullptr);
}

/// Same as above, additionally folding the batch statistics into the
/// running statistics (one training step's worth).
template <class T>
GradientResult<T> backward(const arch::NetworkGraph& g, ParameterSet<T>& params, const Tensor<T>& batch,
                           const Tensor<T>& target, RunningStats stats) {
  return detail::run_backward<T>(g, params, batch, target, stats == RunningStats::update ? &params : nullptr);
}

/// Training-mode loss without touching running statistics.
template <class T>
double train_mode_loss(const arch::NetworkGraph& g, const ParameterSet<T>& params, const Tensor<T>& batch,
                       const Tensor<T>& target) {
  ForwardCache<T> cache;
  detail::run_forward(g, params, batch, Mode::train, cache, nullptr);
  return mse_loss(cache.outputs.back(), target);
}

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares analytic gradients with central differences
/// (L(θ+eps) - L(θ-eps)) / (2 eps) on `samples` randomly chosen coordinates
/// (all of them if there are fewer). Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
inline GradientCheckResult finite_diff_check(const arch::NetworkGraph& g, ParameterSet<double> params,
                                             const Tensor<double>& batch, const Tensor<double>& target, double eps,
                                             std::size_t samples = 100, std::uint64_t seed = 0) {
  require(eps > 0.0 && std::isfinite(eps), ErrorCode::invalid_argument, "finite_diff_check needs eps > 0");
  const auto analytic = backward(g, params, batch, target).gradients;

  struct Coord {
    std::size_t layer;
    ParamRole role;
    std::size_t index;
  };
  std::vector<Coord> all;
  params.for_each_trainable([&](std::size_t layer, ParamRole role, std::span<double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) all.push_back({layer, role, i});
  });
  if (all.size() > samples) {
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(samples);
  }

  GradientCheckResult out;
  for (const auto& c : all) {
    double& theta = params.layers[c.layer].get(c.role)[c.index];
    const double saved = theta;
    theta = saved + eps;
    const double up = train_mode_loss(g, params, batch, target);
    theta = saved - eps;
    const double down = train_mode_loss(g, params, batch, target);
    theta = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.layers[c.layer].get(c.role)[c.index];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(a - numeric) / denom);
    ++out.coordinates_checked;
  }
  return out;
}

}  // namespace denseed
