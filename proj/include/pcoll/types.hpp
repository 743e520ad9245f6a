#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcoll {

/// Logical process index in [0, P).
struct Rank {
  int id = 0;

  constexpr Rank() = default;
  constexpr explicit Rank(int i) : id(i) {}

  friend constexpr auto operator<=>(Rank, Rank) = default;
};

using SimTime = std::int64_t;  // microseconds
using Generation = std::uint64_t;
using Bytes = std::vector<std::byte>;

enum class Phase : std::uint8_t {
  activation = 0,
  reduction = 1,
};

/// Reduction-phase steps that are not recursive-doubling exchanges.
inline constexpr std::uint32_t kStepFoldIn = 0xFFFF0000u;
inline constexpr std::uint32_t kStepFoldOut = 0xFFFF0001u;

/// Identifies one message stream: (collective instance, round, phase, step).
struct Tag {
  std::uint32_t collective = 0;
  Generation round = 0;
  Phase phase = Phase::activation;
  std::uint32_t step = 0;

  friend constexpr bool operator==(const Tag&, const Tag&) = default;
};

struct Message {
  Rank src;
  Rank dst;
  Tag tag;
  Bytes payload;
};

enum class ErrorCode {
  unknown_rank,
  transport_closed,
  cycle_detected,
  duplicate_op_id,
  invalid_schedule,
  deps_unsatisfied,
  replicate_before_completion,
  length_mismatch,
  invalid_argument,
  non_finite,
  dimension_mismatch,
  empty_batch,
  alpha_too_large,
  incomplete_trace,
  state_space_too_large,
  config_invalid,
  empty_input,
  io_error,
  divergence,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pcoll
