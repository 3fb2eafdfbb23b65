#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adeki {

enum class ErrorKind {
  invalid_argument,
  out_of_bounds,
  missing_snapshot,
  missing_checkpoint,
  instability,
  numerical_failure,
  degenerate_update,
  support_violation,
  replay_mismatch,
  training_failure,
  undefined_metric,
  config,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so callers (and tests)
/// can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) fail(kind, message);
}

}  // namespace adeki
