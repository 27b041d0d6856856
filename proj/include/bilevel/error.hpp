#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

enum class ErrorCode {
  dimension_mismatch,
  invalid_parameters,
  not_affine,
  invalid_smoothing,
  evaluation_failure,
  dimension_cap_exceeded,
  not_pointed,
  infeasible,
  unbounded,
  no_path,
  inconsistent_pin,
  unknown_preset,
  invalid_schedule,
  parse_error,
  singular_unrecoverable,
  linesearch_stall,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bilevel
