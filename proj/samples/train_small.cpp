// Trains a small DenseED on a synthetic dataset held in memory and prints the
// loss log.
#include <iostream>

#include "denseed/synth/benchmark.hpp"
#include "denseed/train/trainer.hpp"

using namespace denseed;

int main() {
  synth::SynthConfig cfg;
  cfg.fovs = 4;
  cfg.frames_per_fov = 2;
  cfg.height = cfg.width = 64;
  std::vector<data::FOVRecord> records;
  for (auto& f : synth::make_synth_dataset(cfg)) records.push_back(std::move(f.record));

  arch::DenseEDSpec spec;
  spec.blocks = {1, 2, 1};
  spec.initial_features = 8;
  spec.growth_rate = 4;
  train::TrainConfig tc;
  tc.epochs = 5;
  const auto data = train::prepare_data(records, data::DatasetSplit{{"0", "1", "2"}, {"3"}});
  train::Trainer trainer(spec, tc);
  trainer.run(data);
  std::cout << trainer.log().csv();
}
