#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcoll/types.hpp"

namespace pcoll {

enum class DelayKind { none, constant, linear_skew, random_subset };

DelayKind parse_delay_kind(const std::string& s);
const char* to_string(DelayKind k);

/// Per-round computation delay injected before a process enters a collective.
///
///  - constant:      every rank (or only `rank`, when set) idles `unit_ms`.
///  - linear_skew:   rank i idles (i + 1) * unit_ms.
///  - random_subset: each round, `k` distinct ranks drawn from `seed` idle
///                   `unit_ms` (or a per-draw uniform value in
///                   [unit_ms, max_ms] when max_ms > unit_ms); others idle 0.
struct DelayModel {
  DelayKind kind = DelayKind::none;
  double unit_ms = 1.0;
  double max_ms = 0.0;
  int k = 1;
  std::uint64_t seed = 0;
  std::optional<int> rank;

  /// Throws config_invalid.
  void validate(int p) const;
};

/// Ranks selected by a random-subset model in `round`, ascending.
std::vector<int> delayed_ranks(const DelayModel& model, Generation round, int p);

/// Delay in microseconds for `rank` entering `round`.
SimTime inject_delay(Rank rank, Generation round, const DelayModel& model, int p);

}  // namespace pcoll
