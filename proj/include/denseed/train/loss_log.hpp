#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "denseed/error.hpp"

namespace denseed::train {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0;
  std::optional<double> test_mse;  // absent on epochs without evaluation
  bool operator==(const EpochRecord&) const = default;
};

/// One record per completed epoch, epochs numbered from 1.
struct LossLog {
  std::vector<EpochRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }

  void append(const EpochRecord& r) {
    require(r.epoch == records.size() + 1, ErrorCode::invalid_argument, "loss log epochs must be consecutive");
    require(std::isfinite(r.train_mse) && r.train_mse >= 0, ErrorCode::numeric, "train MSE must be finite and >= 0");
    require(!r.test_mse || (std::isfinite(*r.test_mse) && *r.test_mse >= 0), ErrorCode::numeric,
            "test MSE must be finite and >= 0");
    records.push_back(r);
  }

  /// `epoch,train_mse,test_mse`; a missing test value is an empty field.
  std::string csv() const {
    std::string out = "epoch,train_mse,test_mse\n";
    char buf[96];
    for (const auto& r : records) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,", r.epoch, r.train_mse);
      out += buf;
      if (r.test_mse) {
        std::snprintf(buf, sizeof buf, "%.17g", *r.test_mse);
        out += buf;
      }
      out += '\n';
    }
    return out;
  }

  static LossLog parse_csv(const std::string& text) {
    LossLog log;
    std::istringstream in(text);
    std::string line;
    require(std::getline(in, line) && line == "epoch,train_mse,test_mse", ErrorCode::format, "bad loss log header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto a = line.find(','), b = line.find(',', a + 1);
      require(a != std::string::npos && b != std::string::npos, ErrorCode::format, "bad loss log row: " + line);
      EpochRecord r;
      r.epoch = std::stoul(line.substr(0, a));
      r.train_mse = std::stod(line.substr(a + 1, b - a - 1));
      if (b + 1 < line.size()) r.test_mse = std::stod(line.substr(b + 1));
      log.append(r);
    }
    return log;
  }

  bool operator==(const LossLog&) const = default;
};

}  // namespace denseed::train
