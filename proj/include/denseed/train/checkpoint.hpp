#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "denseed/io/container.hpp"
#include "denseed/io/kv.hpp"
#include "denseed/train/trainer.hpp"

namespace denseed::train {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointManifest = "checkpoint.txt";
inline constexpr const char* kCheckpointData = "state.bin";
inline constexpr const char* kCheckpointFormat = "denseed-checkpoint 1";

namespace detail {

inline std::string entry_name(const char* group, std::size_t layer, ParamRole role) {
  return std::string(group) + "/" + std::to_string(layer) + "/" + std::string(to_string(role));
}

inline std::vector<std::uint64_t> u64_shape(const std::vector<std::size_t>& s) { return {s.begin(), s.end()}; }

template <class F>
void for_each_array(const arch::NetworkGraph& g, bool with_buffers, F&& f) {
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (ParamRole r : kAllRoles) {
      if (!with_buffers && !is_trainable(r)) continue;
      const auto shape = param_shape(g.layers[i], r);
      if (!shape.empty()) f(i, r, shape);
    }
  }
}

}  // namespace detail

/// Writes `checkpoint.txt` (readable manifest with the container's size and
/// CRC-32) and `state.bin` (all arrays). Returns the two paths.
inline std::vector<fs::path> save_checkpoint(const Checkpoint& c, const fs::path& dir) {
  const auto g = arch::build(c.arch);
  c.params.check_shapes(g);
  io::Container box;
  detail::for_each_array(g, true, [&](std::size_t i, ParamRole r, const std::vector<std::size_t>& shape) {
    box.add<float>(detail::entry_name("param", i, r), detail::u64_shape(shape), std::span<const float>(c.params.layers[i].get(r)));
  });
  detail::for_each_array(g, false, [&](std::size_t i, ParamRole r, const std::vector<std::size_t>& shape) {
    box.add<float>(detail::entry_name("adam_m", i, r), detail::u64_shape(shape), std::span<const float>(c.optimizer.m.layers[i].get(r)));
    box.add<float>(detail::entry_name("adam_v", i, r), detail::u64_shape(shape), std::span<const float>(c.optimizer.v.layers[i].get(r)));
  });
  std::vector<std::uint64_t> epochs;
  std::vector<double> train_mse, test_mse;
  for (const auto& r : c.log.records) {
    epochs.push_back(r.epoch);
    train_mse.push_back(r.train_mse);
    test_mse.push_back(r.test_mse.value_or(std::numeric_limits<double>::quiet_NaN()));
  }
  box.add("log/epoch", epochs);
  box.add("log/train_mse", train_mse);
  box.add("log/test_mse", test_mse);
  box.add_text("rng", c.rng_state);
  const std::string bytes = box.serialize();

  io::KeyValues kv;
  kv.set("format", kCheckpointFormat);
  kv.set("arch", arch::format_arch(c.arch));
  kv.set("epoch", std::to_string(c.epoch));
  kv.set("adam_step", std::to_string(c.optimizer.t));
  kv.set("train_ids", io::join(c.train_ids));
  kv.set("test_ids", io::join(c.test_ids));
  kv.set("normalization", c.normalization);
  for (const auto& [k, v] : c.config.to_kv().entries) kv.set("config." + k, v);
  kv.set("data", kCheckpointData);
  kv.set("data_bytes", std::to_string(bytes.size()));
  kv.set("data_crc32", io::hex32(io::crc32_of(bytes)));
  for (const auto& e : box.entries) {
    std::string shape;
    for (std::size_t d = 0; d < e.shape.size(); ++d) shape += (d ? "x" : "") + std::to_string(e.shape[d]);
    kv.set("entry." + e.name, std::string(io::to_string(e.dtype)) + " " + shape + " @" + std::to_string(e.offset));
  }
  fs::create_directories(dir);
  io::write_file(dir / kCheckpointData, bytes);
  io::write_key_values(dir / kCheckpointManifest, kv);
  return {dir / kCheckpointManifest, dir / kCheckpointData};
}

inline Checkpoint load_checkpoint(const fs::path& dir) {
  require(fs::exists(dir / kCheckpointManifest), ErrorCode::io, "no checkpoint at " + dir.string());
  const auto kv = io::read_key_values(dir / kCheckpointManifest);
  const auto need = [&](const std::string& key) {
    auto v = kv.get(key);
    require(v.has_value(), ErrorCode::integrity, "checkpoint manifest lacks '" + key + "'");
    return *v;
  };
  require(need("format") == kCheckpointFormat, ErrorCode::integrity, "unknown checkpoint format");
  const std::string bytes = io::read_file(dir / need("data"));
  require(std::to_string(bytes.size()) == need("data_bytes"), ErrorCode::integrity,
          "checkpoint data is " + std::to_string(bytes.size()) + " bytes, manifest says " + need("data_bytes"));
  require(io::hex32(io::crc32_of(bytes)) == need("data_crc32"), ErrorCode::integrity, "checkpoint data checksum mismatch");
  const auto box = io::Container::parse(bytes);

  Checkpoint c;
  c.arch = arch::parse_arch(need("arch"));
  io::KeyValues cfg;
  for (const auto& [k, v] : kv.entries) {
    if (k.rfind("config.", 0) == 0) cfg.set(k.substr(7), v);
  }
  c.config.apply(cfg);
  c.epoch = TrainConfig::parse_unsigned(need("epoch"), "epoch");
  c.train_ids = io::split_list(need("train_ids"));
  c.test_ids = io::split_list(need("test_ids"));
  c.normalization = need("normalization");

  const auto g = arch::build(c.arch);
  const auto fetch = [&](const std::string& name, const std::vector<std::size_t>& shape) {
    const auto& e = box.at(name);
    require(e.shape == detail::u64_shape(shape), ErrorCode::integrity, "checkpoint entry " + name + " has the wrong shape");
    return box.get<float>(name);
  };
  c.params = ParameterSet<float>::zeros(g);
  c.optimizer = OptimizerState<float>::zeros(g);
  c.optimizer.t = static_cast<std::int64_t>(TrainConfig::parse_unsigned(need("adam_step"), "adam_step"));
  detail::for_each_array(g, true, [&](std::size_t i, ParamRole r, const std::vector<std::size_t>& shape) {
    c.params.layers[i].get(r) = fetch(detail::entry_name("param", i, r), shape);
  });
  detail::for_each_array(g, false, [&](std::size_t i, ParamRole r, const std::vector<std::size_t>& shape) {
    c.optimizer.m.layers[i].get(r) = fetch(detail::entry_name("adam_m", i, r), shape);
    c.optimizer.v.layers[i].get(r) = fetch(detail::entry_name("adam_v", i, r), shape);
  });
  const auto epochs = box.get<std::uint64_t>("log/epoch");
  const auto train_mse = box.get<double>("log/train_mse");
  const auto test_mse = box.get<double>("log/test_mse");
  require(train_mse.size() == epochs.size() && test_mse.size() == epochs.size(), ErrorCode::integrity,
          "checkpoint loss log arrays disagree in length");
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    c.log.append({static_cast<std::size_t>(epochs[i]), train_mse[i],
                  std::isnan(test_mse[i]) ? std::nullopt : std::optional<double>(test_mse[i])});
  }
  c.rng_state = box.get_text("rng");
  return c;
}

}  // namespace denseed::train
