#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "denseed/arch/spec.hpp"
#include "denseed/io/files.hpp"

namespace denseed::io {

/// Ordered `key = value` text. Blank lines and `#` comments are ignored on
/// parse; later duplicates override earlier ones.
class KeyValues {
 public:
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return v;
    }
    return std::nullopt;
  }
  bool contains(const std::string& key) const { return get(key).has_value(); }

  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    entries.emplace_back(key, std::move(value));
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
    return out;
  }
};

inline KeyValues parse_key_values(std::string_view text, const std::string& origin = "config") {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = arch::detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::format,
            origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = arch::detail::trim(line.substr(0, eq));
    require(!key.empty(), ErrorCode::format, origin + ":" + std::to_string(lineno) + ": empty key");
    kv.set(key, arch::detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline KeyValues read_key_values(const fs::path& path) { return parse_key_values(read_file(path), path.string()); }

inline void write_key_values(const fs::path& path, const KeyValues& kv) { write_file(path, kv.str()); }

inline std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = arch::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace denseed::io
