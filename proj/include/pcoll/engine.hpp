#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcoll/schedule.hpp"
#include "pcoll/transport.hpp"

namespace pcoll {

struct TraceEvent {
  enum class Action : std::uint8_t { fire, complete, retire };

  SimTime time = 0;
  int rank = 0;
  std::uint32_t collective = 0;
  OpId op_id = 0;
  OpKind kind = OpKind::nop;
  Generation generation = 0;
  Action action = Action::fire;
};

const char* to_string(TraceEvent::Action a);

/// `{time, rank, op_id, kind, generation}` plus the collective id and action.
std::string to_json_line(const TraceEvent& ev);

using ScheduleHandle = std::uint32_t;

/// Executes committed schedules on behalf of one process.
///
/// Ops are consumable: each fires at most once per generation, no matter how
/// many times its dependencies are re-satisfied or fire() is called. Firing is
/// serialized per engine; the engine itself is not thread-safe, callers that
/// progress it from several threads must hold a lock around every call.
///
/// Listener callbacks are deferred until the engine has finished propagating
/// the current call, so they may safely call back into the engine.
class Engine {
 public:
  using CompletionFn = std::function<void(Generation, const Bytes& result)>;
  using SnapshotFn = std::function<void(Generation, const Bytes& contribution)>;
  using TraceSink = std::function<void(const TraceEvent&)>;

  Engine(Rank self, Transport& transport);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  Rank self() const { return self_; }

  /// Validates the DAG and fires every dependency-free op except the entry.
  /// Errors: cycle_detected, duplicate_op_id, invalid_schedule.
  ScheduleHandle commit(Schedule s);

  /// Fires the entry NOP and opens the gate of the current generation.
  /// Idempotent within a generation.
  void activate_internal(ScheduleHandle h);

  /// Fires a single op. Consumed ops are ignored; throws deps_unsatisfied if
  /// the op's dependency logic does not hold.
  void fire(ScheduleHandle h, OpId op);

  /// Starts the next generation of a completed non-persistent schedule.
  /// Throws replicate_before_completion.
  ScheduleHandle replicate(ScheduleHandle h);

  /// Inbound message from the transport.
  void deliver(Message msg);
  /// Delivers everything currently queued in this rank's transport mailbox.
  std::size_t drain_mailbox();

  /// While generation `g` is held, the gate NOP of that generation only fires
  /// through activate_internal() or release_holds().
  void hold(ScheduleHandle h, Generation g);
  void release_holds(ScheduleHandle h, Generation upto);
  /// Drops the hold on `g` only.
  void unhold(ScheduleHandle h, Generation g);
  bool held(ScheduleHandle h, Generation g) const;

  /// Combines `data` into the send slot with the schedule's layout.
  void accumulate_send(ScheduleHandle h, std::span<const std::byte> data);
  std::span<std::byte> send_buffer(ScheduleHandle h);
  const Bytes& send_buffer_view(ScheduleHandle h) const;

  /// Result of the latest completed generation (identity before the first).
  const Bytes& recv_buffer(ScheduleHandle h) const;
  std::optional<Generation> recv_generation(ScheduleHandle h) const;

  Generation generation(ScheduleHandle h) const;
  /// Whether the current generation has completed and awaits replicate().
  bool completed(ScheduleHandle h) const;
  bool consumed(ScheduleHandle h, OpId op) const;
  /// Whether the send slot has been consumed in the current generation.
  bool snapshot_taken(ScheduleHandle h) const;

  const Schedule& schedule(ScheduleHandle h) const;

  void on_complete(ScheduleHandle h, CompletionFn fn);
  void on_snapshot(ScheduleHandle h, SnapshotFn fn);
  void set_trace_sink(TraceSink sink) { trace_ = std::move(sink); }

  std::size_t unexpected_messages() const { return unexpected_.size(); }
  std::uint64_t stale_messages_dropped() const { return stale_dropped_; }

 private:
  enum class OpState : std::uint8_t { pending, posted, done, retired };

  struct Runtime {
    Schedule sched;
    std::unordered_map<OpId, std::size_t> index;
    std::vector<std::vector<std::size_t>> dependents;
    std::vector<OpState> state;
    std::vector<Bytes> slots;
    std::vector<bool> persistent_slot;
    Bytes recv_buffer;
    std::optional<Generation> recv_gen;
    Generation gen = 0;
    bool complete = false;
    std::set<Generation> holds;
    std::vector<CompletionFn> completion_fns;
    std::vector<SnapshotFn> snapshot_fns;
  };

  struct Work {
    ScheduleHandle h;
    std::size_t op;
    Generation gen;
  };

  Runtime& rt(ScheduleHandle h);
  const Runtime& rt(ScheduleHandle h) const;
  std::size_t idx(const Runtime& r, OpId id) const;

  bool satisfied(const Runtime& r, std::size_t i) const;
  void try_fire(ScheduleHandle h, std::size_t i);
  void fire_now(ScheduleHandle h, std::size_t i);
  void complete_op(ScheduleHandle h, std::size_t i);
  bool match_recv(ScheduleHandle h, std::size_t i, Message& msg);
  void post_from_unexpected(ScheduleHandle h, std::size_t i);
  void start_generation(ScheduleHandle h);
  void finish_generation(ScheduleHandle h);
  void advance_generation(ScheduleHandle h);
  void open_gate(ScheduleHandle h);
  void emit(const Runtime& r, std::size_t i, TraceEvent::Action a);
  void pump();

  Rank self_;
  Transport& transport_;
  std::deque<Runtime> runtimes_;
  std::unordered_map<std::uint32_t, ScheduleHandle> by_collective_;
  std::deque<Message> unexpected_;
  std::deque<Work> work_;
  std::deque<std::function<void()>> deferred_;
  bool pumping_ = false;
  std::uint64_t stale_dropped_ = 0;
  TraceSink trace_;
};

}  // namespace pcoll
