#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace denseed {

enum class ErrorCode {
  invalid_spec,
  unrepresentable_spec,
  inconsistent_graph,
  dimension,
  numeric,
  invalid_argument,
  malformed_fov,
  missing_target,
  format,
  io,
  integrity,
  unknown_id,
  empty_test,
  empty_training_set,
  bad_quadrants,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_spec: return "invalid-spec";
    case ErrorCode::unrepresentable_spec: return "unrepresentable-spec";
    case ErrorCode::inconsistent_graph: return "inconsistent-graph";
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::malformed_fov: return "malformed-fov";
    case ErrorCode::missing_target: return "missing-target";
    case ErrorCode::format: return "format";
    case ErrorCode::io: return "io";
    case ErrorCode::integrity: return "integrity";
    case ErrorCode::unknown_id: return "unknown-id";
    case ErrorCode::empty_test: return "empty-test";
    case ErrorCode::empty_training_set: return "empty-training-set";
    case ErrorCode::bad_quadrants: return "bad-quadrants";
  }
  return "unknown";
}

/// Single exception type for the library; `code()` tells callers (and the
/// CLI exit-code mapping) what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace denseed
