#include "adeki/error.hpp"

namespace adeki {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::out_of_bounds: return "out-of-bounds";
    case ErrorKind::missing_snapshot: return "missing-snapshot";
    case ErrorKind::missing_checkpoint: return "missing-checkpoint";
    case ErrorKind::instability: return "instability";
    case ErrorKind::numerical_failure: return "numerical-failure";
    case ErrorKind::degenerate_update: return "degenerate-update";
    case ErrorKind::support_violation: return "support-violation";
    case ErrorKind::replay_mismatch: return "replay-mismatch";
    case ErrorKind::training_failure: return "training-failure";
    case ErrorKind::undefined_metric: return "undefined-metric";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace adeki
