#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "denseed/image.hpp"

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("denseed_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline denseed::Image<std::uint16_t> random_u16(std::size_t h, std::size_t w, std::uint64_t seed) {
  denseed::Image<std::uint16_t> img(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 65535);
  for (auto& p : img.pixels) p = static_cast<std::uint16_t>(d(rng));
  return img;
}

}  // namespace testutil
