#include "pcoll/types.hpp"

namespace pcoll {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_rank: return "unknown-rank";
    case ErrorCode::transport_closed: return "transport-closed";
    case ErrorCode::cycle_detected: return "cycle-detected";
    case ErrorCode::duplicate_op_id: return "duplicate-op-id";
    case ErrorCode::invalid_schedule: return "invalid-schedule";
    case ErrorCode::deps_unsatisfied: return "deps-unsatisfied";
    case ErrorCode::replicate_before_completion: return "replicate-before-completion";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::empty_batch: return "empty-batch";
    case ErrorCode::alpha_too_large: return "alpha-too-large";
    case ErrorCode::incomplete_trace: return "incomplete-trace";
    case ErrorCode::state_space_too_large: return "state-space-too-large";
    case ErrorCode::config_invalid: return "config-invalid";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace pcoll
