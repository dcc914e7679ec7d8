#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <string>

#include "denseed/io/kv.hpp"

namespace denseed::train {

/// Optimizer and schedule settings. Defaults are the reference training
/// setup: batch 4, Adam lr 3e-4, weight decay 3e-5, 200 epochs.
struct TrainConfig {
  std::size_t batch_size = 4;
  double learning_rate = 3e-4;
  double weight_decay = 3e-5;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t eval_every = 1;  // test MSE every n epochs; 0 disables

  void check() const {
    require(batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be >= 1");
    require(learning_rate > 0 && std::isfinite(learning_rate), ErrorCode::invalid_argument, "learning_rate must be > 0");
    require(weight_decay >= 0 && std::isfinite(weight_decay), ErrorCode::invalid_argument, "weight_decay must be >= 0");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorCode::invalid_argument, "betas must lie in [0,1)");
    require(adam_eps > 0, ErrorCode::invalid_argument, "adam_eps must be > 0");
  }

  bool operator==(const TrainConfig&) const = default;

  /// Every field as `key = value`, in a fixed order. Reals use the shortest
  /// text that round-trips.
  io::KeyValues to_kv() const {
    io::KeyValues kv;
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lr", real(learning_rate));
    kv.set("wd", real(weight_decay));
    kv.set("epochs", std::to_string(epochs));
    kv.set("seed", std::to_string(seed));
    kv.set("beta1", real(beta1));
    kv.set("beta2", real(beta2));
    kv.set("adam_eps", real(adam_eps));
    kv.set("eval_every", std::to_string(eval_every));
    return kv;
  }

  /// Overrides fields present in `kv`; other keys are ignored.
  void apply(const io::KeyValues& kv) {
    const auto u = [&](const char* key, auto& field) {
      if (auto v = kv.get(key)) field = static_cast<std::remove_reference_t<decltype(field)>>(parse_unsigned(*v, key));
    };
    const auto r = [&](const char* key, double& field) {
      if (auto v = kv.get(key)) field = parse_real(*v, key);
    };
    u("batch_size", batch_size);
    r("lr", learning_rate);
    r("wd", weight_decay);
    u("epochs", epochs);
    u("seed", seed);
    r("beta1", beta1);
    r("beta2", beta2);
    r("adam_eps", adam_eps);
    u("eval_every", eval_every);
  }

  static std::string real(double v) {
    char buf[32];
    for (int digits = 1; digits <= 17; ++digits) {
      std::snprintf(buf, sizeof buf, "%.*g", digits, v);
      if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
  }
  static double parse_real(const std::string& s, const std::string& key) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::invalid_argument, key + ": '" + s + "' is not a number");
  }
  static std::uint64_t parse_unsigned(const std::string& s, const std::string& key) {
    try {
      std::size_t used = 0;
      if (!s.empty() && s[0] != '-') {
        const auto v = std::stoull(s, &used);
        if (used == s.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail(ErrorCode::invalid_argument, key + ": '" + s + "' is not a non-negative integer");
  }
};

}  // namespace denseed::train
