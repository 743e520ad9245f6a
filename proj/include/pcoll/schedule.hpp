#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pcoll/reduce.hpp"
#include "pcoll/types.hpp"

namespace pcoll {

using OpId = std::uint32_t;
using SlotId = std::uint32_t;

enum class OpKind : std::uint8_t { send, recv, compute, nop };
enum class DepLogic : std::uint8_t { all, any };

const char* to_string(OpKind k);

/// Sends the content of `source` (or an empty payload) to `peer`.
struct SendParams {
  Rank peer;
  Phase phase = Phase::reduction;
  std::uint32_t step = 0;
  std::optional<SlotId> source;
};

/// Receives the matching message from `peer` into `target` (if any).
struct RecvParams {
  Rank peer;
  Phase phase = Phase::reduction;
  std::uint32_t step = 0;
  std::optional<SlotId> target;
};

/// target = target (layout op) source. When `consume_source` is set the
/// source slot is reset to the layout identity afterwards.
struct ComputeParams {
  SlotId target = 0;
  SlotId source = 0;
  bool consume_source = false;
};

struct OpNode {
  OpId id = 0;
  OpKind kind = OpKind::nop;
  std::variant<std::monostate, SendParams, RecvParams, ComputeParams> params;
  DepLogic dep_logic = DepLogic::all;
  std::vector<OpId> deps;
  bool consumed = false;
};

/// A DAG of consumable operations over a set of equally sized buffer slots.
///
/// `entry`, when present, is the internal-activation anchor: it never fires on
/// its own. Without an entry every dependency-free op fires at commit.
/// `gate`, when present, is a dependency-free NOP that fires at the start of
/// every generation unless the owning engine holds that generation.
/// Completion of `completion` ends a generation; the content of
/// `result_slot` is then published to the schedule's receive buffer.
struct Schedule {
  std::uint32_t collective = 0;
  ReductionLayout layout;
  std::uint32_t slot_count = 1;
  std::vector<SlotId> persistent_slots;
  SlotId send_slot = 0;
  SlotId result_slot = 0;
  std::optional<OpId> entry;
  std::optional<OpId> gate;
  std::optional<OpId> snapshot;
  OpId completion = 0;
  bool persistent = true;
  std::vector<OpNode> ops;

  /// Throws cycle_detected, duplicate_op_id or invalid_schedule. A persistent
  /// schedule is rejected if it could complete without any activation or
  /// inbound message, since it would replicate forever.
  void validate(int p, Rank self) const;

  const OpNode* find(OpId id) const;
};

/// Assigns sequential op ids.
class ScheduleBuilder {
 public:
  explicit ScheduleBuilder(std::uint32_t collective, ReductionLayout layout);

  SlotId add_slot();
  OpId nop(std::vector<OpId> deps = {}, DepLogic logic = DepLogic::all);
  OpId send(SendParams p, std::vector<OpId> deps = {}, DepLogic logic = DepLogic::all);
  OpId recv(RecvParams p, std::vector<OpId> deps = {}, DepLogic logic = DepLogic::all);
  OpId compute(ComputeParams p, std::vector<OpId> deps = {}, DepLogic logic = DepLogic::all);

  Schedule& schedule() { return s_; }
  Schedule build() && { return std::move(s_); }

 private:
  OpId add(OpKind kind, decltype(OpNode::params) params, std::vector<OpId> deps, DepLogic logic);

  Schedule s_;
};

}  // namespace pcoll
