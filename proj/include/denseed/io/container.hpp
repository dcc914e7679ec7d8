#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "denseed/error.hpp"

namespace denseed::io {

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i64 = 3, u64 = 4, u8 = 5 };

inline std::string_view to_string(DType d) {
  switch (d) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i64: return "i64";
    case DType::u64: return "u64";
    case DType::u8: return "u8";
  }
  return "?";
}

inline std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64:
    case DType::i64:
    case DType::u64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::i64;
  else if constexpr (std::is_same_v<T, std::uint64_t>) return DType::u64;
  else {
    static_assert(std::is_same_v<T, std::uint8_t>, "unsupported container dtype");
    return DType::u8;
  }
}

struct ArrayEntry {
  std::string name;
  DType dtype = DType::u8;
  std::vector<std::uint64_t> shape;
  std::string bytes;
  std::uint64_t offset = 0;  // payload offset in the serialized file, set by serialize/parse

  std::uint64_t count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  bool operator==(const ArrayEntry& o) const {
    return name == o.name && dtype == o.dtype && shape == o.shape && bytes == o.bytes;
  }
};

/// Flat binary container of named little-endian arrays.
///
///   "DNSDBIN1" u64 entry_count
///   per entry: u32 name_len, name, u8 dtype, u32 ndim, u64 dims[ndim], u64 nbytes, payload
class Container {
 public:
  std::vector<ArrayEntry> entries;

  template <class T>
  void add(std::string name, std::vector<std::uint64_t> shape, std::span<const T> values) {
    ArrayEntry e{std::move(name), dtype_of<T>(), std::move(shape), {}, 0};
    require(e.count() == values.size(), ErrorCode::dimension, "container entry " + e.name + " shape/size mismatch");
    e.bytes.assign(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    entries.push_back(std::move(e));
  }
  template <class T>
  void add(std::string name, const std::vector<T>& values) {
    add<T>(std::move(name), {values.size()}, std::span<const T>(values));
  }
  void add_text(std::string name, std::string_view text) {
    add<std::uint8_t>(std::move(name), {text.size()},
                      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  const ArrayEntry* find(std::string_view name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
  const ArrayEntry& at(std::string_view name) const {
    const auto* e = find(name);
    require(e != nullptr, ErrorCode::integrity, "container has no entry '" + std::string(name) + "'");
    return *e;
  }

  template <class T>
  std::vector<T> get(std::string_view name) const {
    const auto& e = at(name);
    require(e.dtype == dtype_of<T>(), ErrorCode::integrity, "entry " + e.name + " has dtype " + std::string(to_string(e.dtype)));
    std::vector<T> out(e.bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
  }
  std::string get_text(std::string_view name) const {
    const auto& e = at(name);
    require(e.dtype == DType::u8, ErrorCode::integrity, "entry " + e.name + " is not text");
    return e.bytes;
  }

  std::string serialize() {
    std::string out = "DNSDBIN1";
    put<std::uint64_t>(out, entries.size());
    for (auto& e : entries) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
      out += e.name;
      put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
      for (auto d : e.shape) put<std::uint64_t>(out, d);
      put<std::uint64_t>(out, e.bytes.size());
      e.offset = out.size();
      out += e.bytes;
    }
    return out;
  }

  static Container parse(std::string_view data) {
    Reader r{data, 0};
    require(data.substr(0, 8) == "DNSDBIN1", ErrorCode::integrity, "bad container magic");
    r.pos = 8;
    Container c;
    const auto n = r.take<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      ArrayEntry e;
      e.name = std::string(r.bytes(r.take<std::uint32_t>()));
      const auto dt = r.take<std::uint8_t>();
      require(dt >= 1 && dt <= 5, ErrorCode::integrity, "bad dtype in container");
      e.dtype = static_cast<DType>(dt);
      const auto ndim = r.take<std::uint32_t>();
      require(ndim <= 8, ErrorCode::integrity, "bad rank in container");
      for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(r.take<std::uint64_t>());
      const auto nbytes = r.take<std::uint64_t>();
      require(nbytes == e.count() * dtype_size(e.dtype), ErrorCode::integrity, "entry " + e.name + " size mismatch");
      e.offset = r.pos;
      e.bytes = std::string(r.bytes(nbytes));
      c.entries.push_back(std::move(e));
    }
    require(r.pos == data.size(), ErrorCode::integrity, "trailing bytes in container");
    return c;
  }

 private:
  template <class T>
  static void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
  }

  struct Reader {
    std::string_view data;
    std::size_t pos;
    std::string_view bytes(std::uint64_t n) {
      require(n <= data.size() - pos, ErrorCode::integrity, "container truncated");
      auto s = data.substr(pos, n);
      pos += n;
      return s;
    }
    template <class T>
    T take() {
      T v;
      std::memcpy(&v, bytes(sizeof(T)).data(), sizeof(T));
      return v;
    }
  };
};

}  // namespace denseed::io
