// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_ERROR_HPP
#define SPKSIM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace spksim {

enum class ErrorCode {
  io,
  parse,
  schema,
  dimension_mismatch,
  dangling_reference,
  duplicate_id,
  score_out_of_range,
  invalid_config,
  invalid_argument,
  length_mismatch,
  empty_input,
  zero_variance,
  non_finite,
  unknown_id,
  state,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::schema: return "schema";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::dangling_reference: return "dangling_reference";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::score_out_of_range: return "score_out_of_range";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::unknown_id: return "unknown_id";
    case ErrorCode::state: return "state";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can report it in a machine-parsable way.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Rethrows `e` with `context` prepended to the message, keeping the code.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  throw Error(e.code(), context + ": " + e.what());
}

}  // namespace spksim

#endif  // SPKSIM_ERROR_HPP
