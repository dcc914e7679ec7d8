#pragma once

#include <array>
#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "denseed/error.hpp"

namespace denseed::arch {

/// Block configuration (L1, L2, L3) plus widths of a DenseED network.
struct DenseEDSpec {
  std::array<int, 3> blocks{3, 6, 3};
  int growth_rate = 16;
  int initial_features = 48;
  int in_channels = 1;
  int out_channels = 1;

  bool operator==(const DenseEDSpec&) const = default;

  void check() const {
    for (int b : blocks) require(b >= 1, ErrorCode::invalid_spec, "dense block sizes must be >= 1");
    require(growth_rate >= 1, ErrorCode::invalid_spec, "growth rate must be >= 1");
    require(initial_features >= 2 && initial_features % 2 == 0, ErrorCode::invalid_spec,
            "initial features must be even and >= 2");
    require(in_channels >= 1 && out_channels >= 1, ErrorCode::invalid_spec, "channel counts must be >= 1");
  }

  std::string name() const {
    return "DenseED-(" + std::to_string(blocks[0]) + "," + std::to_string(blocks[1]) + "," +
           std::to_string(blocks[2]) + ")";
  }
};

struct DnCNNSpec {
  int depth = 17;
  int width = 64;
  int in_channels = 1;
  int out_channels = 1;
  bool operator==(const DnCNNSpec&) const = default;
  std::string name() const { return "DnCNN-" + std::to_string(depth); }
};

struct UNetSpec {
  int levels = 5;
  int base_width = 48;
  int in_channels = 1;
  int out_channels = 1;
  bool operator==(const UNetSpec&) const = default;
  std::string name() const { return "U-Net-" + std::to_string(levels); }
};

/// A single convolution. Used for closed-form gradient tests and oracle
/// checkpoints (kernel 1 with unit weight is the identity map).
struct LinearSpec {
  int kernel = 1;
  int in_channels = 1;
  int out_channels = 1;
  bool has_bias = false;
  bool operator==(const LinearSpec&) const = default;
  std::string name() const { return "Linear-k" + std::to_string(kernel); }
};

using ArchSpec = std::variant<DenseEDSpec, DnCNNSpec, UNetSpec, LinearSpec>;

inline std::string arch_name(const ArchSpec& a) {
  return std::visit([](const auto& s) { return s.name(); }, a);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline int parse_int(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  int v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
    fail(ErrorCode::invalid_spec, "cannot parse integer for " + what + ": '" + t + "'");
  }
  return v;
}

inline std::vector<int> parse_int_list(std::string_view s, const std::string& what) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(parse_int(piece, what));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parses "arch=denseed;blocks=3,6,3;growth=16;init=48" style strings. Pairs
/// may be separated by ';' or whitespace; `arch` defaults to denseed.
inline ArchSpec parse_arch(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::string buf(text);
  for (char& c : buf) {
    if (c == ';' || c == ' ' || c == '\t') c = '\n';
  }
  std::istringstream in(buf);
  std::string item;
  while (std::getline(in, item)) {
    item = detail::trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorCode::invalid_spec, "expected key=value, got '" + item + "'");
    kv[detail::trim(item.substr(0, eq))] = detail::trim(item.substr(eq + 1));
  }
  const auto take = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return {};
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  std::string kind = take("arch");
  if (kind.empty()) kind = "denseed";
  const auto int_or = [&](const std::string& key, int dflt) {
    const std::string v = take(key);
    return v.empty() ? dflt : detail::parse_int(v, key);
  };

  ArchSpec result;
  if (kind == "denseed") {
    DenseEDSpec s;
    const std::string b = take("blocks");
    if (!b.empty()) {
      const auto v = detail::parse_int_list(b, "blocks");
      require(v.size() == 3, ErrorCode::invalid_spec, "blocks needs three values");
      s.blocks = {v[0], v[1], v[2]};
    }
    s.growth_rate = int_or("growth", s.growth_rate);
    s.initial_features = int_or("init", s.initial_features);
    s.in_channels = int_or("in", s.in_channels);
    s.out_channels = int_or("out", s.out_channels);
    s.check();
    result = s;
  } else if (kind == "dncnn") {
    DnCNNSpec s;
    s.depth = int_or("depth", s.depth);
    s.width = int_or("width", s.width);
    s.in_channels = int_or("in", s.in_channels);
    s.out_channels = int_or("out", s.out_channels);
    result = s;
  } else if (kind == "unet") {
    UNetSpec s;
    s.levels = int_or("levels", s.levels);
    s.base_width = int_or("width", s.base_width);
    s.in_channels = int_or("in", s.in_channels);
    s.out_channels = int_or("out", s.out_channels);
    result = s;
  } else if (kind == "linear") {
    LinearSpec s;
    s.kernel = int_or("kernel", s.kernel);
    s.in_channels = int_or("in", s.in_channels);
    s.out_channels = int_or("out", s.out_channels);
    s.has_bias = int_or("bias", 0) != 0;
    result = s;
  } else {
    fail(ErrorCode::invalid_spec, "unknown arch '" + kind + "'");
  }
  if (!kv.empty()) fail(ErrorCode::invalid_spec, "unknown key '" + kv.begin()->first + "' for arch " + kind);
  return result;
}

/// Inverse of parse_arch; always writes every field.
inline std::string format_arch(const ArchSpec& a) {
  struct V {
    std::string operator()(const DenseEDSpec& s) const {
      return "arch=denseed;blocks=" + std::to_string(s.blocks[0]) + "," + std::to_string(s.blocks[1]) + "," +
             std::to_string(s.blocks[2]) + ";growth=" + std::to_string(s.growth_rate) +
             ";init=" + std::to_string(s.initial_features) + ";in=" + std::to_string(s.in_channels) +
             ";out=" + std::to_string(s.out_channels);
    }
    std::string operator()(const DnCNNSpec& s) const {
      return "arch=dncnn;depth=" + std::to_string(s.depth) + ";width=" + std::to_string(s.width) +
             ";in=" + std::to_string(s.in_channels) + ";out=" + std::to_string(s.out_channels);
    }
    std::string operator()(const UNetSpec& s) const {
      return "arch=unet;levels=" + std::to_string(s.levels) + ";width=" + std::to_string(s.base_width) +
             ";in=" + std::to_string(s.in_channels) + ";out=" + std::to_string(s.out_channels);
    }
    std::string operator()(const LinearSpec& s) const {
      return "arch=linear;kernel=" + std::to_string(s.kernel) + ";in=" + std::to_string(s.in_channels) +
             ";out=" + std::to_string(s.out_channels) + ";bias=" + (s.has_bias ? "1" : "0");
    }
  };
  return std::visit(V{}, a);
}

}  // namespace denseed::arch
