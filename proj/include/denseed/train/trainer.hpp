#pragma once

#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "denseed/arch/builders.hpp"
#include "denseed/arch/spec.hpp"
#include "denseed/data/dataset.hpp"
#include "denseed/random.hpp"
#include "denseed/tensor/exec.hpp"
#include "denseed/train/adam.hpp"
#include "denseed/train/loss_log.hpp"

namespace denseed::train {

/// A full-size held-out frame and its target, both normalized.
struct TestFrame {
  std::string id;
  Image<float> input, target;
};

struct TrainData {
  data::PatchSet train;
  std::vector<TestFrame> test;
};

inline std::vector<TestFrame> test_frames(const std::vector<data::FOVRecord>& records, const std::vector<std::string>& ids,
                                          const data::Normalization& norm = {}) {
  std::vector<TestFrame> out;
  for (const auto& rec : records) {
    if (std::find(ids.begin(), ids.end(), rec.id) == ids.end()) continue;
    const auto target = data::normalize(rec.target, norm);
    for (std::size_t f = 0; f < rec.frames.size(); ++f) {
      out.push_back({rec.id + "/" + std::to_string(f), data::normalize(rec.frames[f], norm), target});
    }
  }
  return out;
}

/// Training patches from the split's training FOVs; full test frames from
/// its test FOVs.
inline TrainData prepare_data(const std::vector<data::FOVRecord>& records, const data::DatasetSplit& split,
                              const data::Normalization& norm = {}) {
  return {data::build_patch_set(records, split.train_ids, norm), test_frames(records, split.test_ids, norm)};
}

inline Tensor<float> as_batch(const Image<float>& img) { return data::stack_images({&img}); }

/// Mean per-frame MSE of evaluation-mode predictions on full frames.
inline double test_mse(const arch::NetworkGraph& g, const ParameterSet<float>& params, const std::vector<TestFrame>& frames) {
  require(!frames.empty(), ErrorCode::empty_test, "no test frames");
  double sum = 0;
  for (const auto& f : frames) sum += mse_loss(predict(g, params, as_batch(f.input)), as_batch(f.target));
  return sum / static_cast<double>(frames.size());
}

/// Mean training-mode batch loss over the set in storage order, without
/// updating anything. Used as the "before training" reference.
inline double mean_batch_loss(const arch::NetworkGraph& g, const ParameterSet<float>& params, const data::PatchSet& set,
                              std::size_t batch_size) {
  require(!set.empty(), ErrorCode::empty_training_set, "no training patches");
  double sum = 0;
  std::size_t batches = 0;
  for (std::size_t i = 0; i < set.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(set.size(), i + batch_size); ++j) idx.push_back(j);
    const auto [x, t] = data::make_batch(set, idx);
    sum += train_mode_loss(g, params, x, t);
    ++batches;
  }
  return sum / static_cast<double>(batches);
}

struct Checkpoint {
  arch::ArchSpec arch;
  TrainConfig config;
  ParameterSet<float> params;
  OptimizerState<float> optimizer;
  std::size_t epoch = 0;
  std::string rng_state;
  LossLog log;
  std::vector<std::string> train_ids, test_ids;
  std::string normalization = "minmax";

  bool operator==(const Checkpoint& o) const {
    return arch::format_arch(arch) == arch::format_arch(o.arch) && config == o.config && params == o.params &&
           optimizer == o.optimizer && epoch == o.epoch && rng_state == o.rng_state && log == o.log &&
           train_ids == o.train_ids && test_ids == o.test_ids && normalization == o.normalization;
  }
};

/// Called before each optimizer step with the batch indices, the parameters
/// the loss was computed with, and that loss.
using BatchObserver = std::function<void(const std::vector<std::size_t>&, const ParameterSet<float>&, double)>;

/// Owns parameters, optimizer state, the shuffle stream and the loss log.
/// Initialization uses a stream derived from the seed, the shuffle another.
class Trainer {
 public:
  Trainer(arch::ArchSpec spec, TrainConfig cfg)
      : spec_(std::move(spec)), graph_(arch::build(spec_)), cfg_(cfg), rng_(derive_seed(cfg.seed, 1)) {
    cfg_.check();
    params_ = initialize<float>(graph_, derive_seed(cfg_.seed, 0));
    opt_ = OptimizerState<float>::zeros(graph_);
  }

  static Trainer resume(const Checkpoint& c) {
    Trainer t(c.arch, c.config);
    c.params.check_shapes(t.graph_);
    t.params_ = c.params;
    t.opt_ = c.optimizer;
    t.epoch_ = c.epoch;
    t.log_ = c.log;
    std::istringstream in(c.rng_state);
    in >> t.rng_;
    require(!in.fail(), ErrorCode::integrity, "checkpoint has a corrupt shuffle state");
    require(t.log_.size() == t.epoch_, ErrorCode::integrity, "checkpoint loss log does not match its epoch");
    return t;
  }

  const arch::ArchSpec& spec() const { return spec_; }
  const arch::NetworkGraph& graph() const { return graph_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  const ParameterSet<float>& params() const { return params_; }
  const OptimizerState<float>& optimizer() const { return opt_; }
  const LossLog& log() const { return log_; }
  std::size_t epoch() const { return epoch_; }

  /// One pass over the shuffled training patches. On a numeric failure the
  /// state is rolled back to the start of the epoch and the error rethrown.
  const EpochRecord& run_epoch(const TrainData& data, const BatchObserver& observe = {}) {
    require(!data.train.empty(), ErrorCode::empty_training_set, "no training patches");
    const auto saved_params = params_;
    const auto saved_opt = opt_;
    const auto saved_rng = rng_;
    try {
      double sum = 0;
      const auto batches = data::epoch_batches(data.train.size(), cfg_.batch_size, rng_);
      for (const auto& idx : batches) {
        const auto [x, t] = data::make_batch(data.train, idx);
        auto step = backward(graph_, params_, x, t, RunningStats::update);
        require(std::isfinite(step.loss), ErrorCode::numeric, "training loss is not finite");
        if (observe) observe(idx, params_, step.loss);
        adam_step(params_, step.gradients, opt_, cfg_);
        sum += step.loss;
      }
      EpochRecord rec{epoch_ + 1, sum / static_cast<double>(batches.size()), std::nullopt};
      if (!data.test.empty() && cfg_.eval_every > 0 && rec.epoch % cfg_.eval_every == 0) {
        rec.test_mse = test_mse(graph_, params_, data.test);
      }
      log_.append(rec);
      ++epoch_;
      return log_.records.back();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric) throw;
      params_ = saved_params;
      opt_ = saved_opt;
      rng_ = saved_rng;
      fail(ErrorCode::numeric, "training diverged in epoch " + std::to_string(epoch_ + 1) + ": " + e.what());
    }
  }

  /// Trains until `config().epochs` epochs are complete.
  void run(const TrainData& data, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    while (epoch_ < cfg_.epochs) {
      const auto& rec = run_epoch(data);
      if (on_epoch) on_epoch(rec);
    }
  }

  Checkpoint checkpoint(std::vector<std::string> train_ids = {}, std::vector<std::string> test_ids = {},
                        std::string normalization = "minmax") const {
    std::ostringstream rng;
    rng << rng_;
    return {spec_, cfg_, params_, opt_, epoch_, rng.str(), log_, std::move(train_ids), std::move(test_ids),
            std::move(normalization)};
  }

 private:
  arch::ArchSpec spec_;
  arch::NetworkGraph graph_;
  TrainConfig cfg_;
  ParameterSet<float> params_;
  OptimizerState<float> opt_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  LossLog log_;
};

struct TrainResult {
  ParameterSet<float> params;
  LossLog log;
};

inline TrainResult train(const arch::ArchSpec& spec, const TrainData& data, const TrainConfig& cfg) {
  Trainer t(spec, cfg);
  if (cfg.epochs > 0) require(!data.train.empty(), ErrorCode::empty_training_set, "no training patches");
  t.run(data);
  return {t.params(), t.log()};
}

}  // namespace denseed::train
