#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "pcoll/transport.hpp"

namespace pcoll {

/// One popped entry of the global event queue.
struct TransportEvent {
  enum class Kind : std::uint8_t { deliver, timer };

  SimTime time = 0;
  std::uint64_t seq = 0;
  Kind kind = Kind::timer;
  int rank = 0;  // destination (deliver) or owner (timer)
  int src = -1;
  Tag tag;
  std::size_t bytes = 0;
};

/// Deterministic discrete-event network. Single-threaded: every callback runs
/// on the thread that drives run()/step(). Events are totally ordered by
/// (time, sequence number); a constant link latency therefore preserves
/// per-stream FIFO order.
class SimNetwork final : public Transport {
 public:
  explicit SimNetwork(int p, SimTime link_latency_us = 0);

  int size() const override { return p_; }
  void send(Message msg) override;
  Mailbox& mailbox(Rank r) override;
  void close() override;
  SimTime now_us() const override { return now_; }

  SimTime now() const { return now_; }
  SimTime link_latency() const { return latency_; }

  void schedule_at(SimTime t, Rank owner, std::function<void()> fn);
  void schedule_after(SimTime dt, Rank owner, std::function<void()> fn) {
    schedule_at(now_ + dt, owner, std::move(fn));
  }

  /// Suspending receive: the callback runs once a matching message is
  /// delivered to `dst` (immediately if the mailbox already holds one).
  void recv_match(Rank dst, TagPattern pattern, std::function<void(Message)> fn);

  /// Pops and processes one event; false when the queue is empty.
  bool step();
  void run();
  /// Runs until `done` holds or the queue drains; returns done().
  bool run_until(const std::function<bool()>& done);

  bool idle() const { return heap_.empty(); }
  std::size_t pending_events() const { return heap_.size(); }

  void set_record_trace(bool on) { record_ = on; }
  const std::vector<TransportEvent>& trace() const { return trace_; }
  /// FNV-1a over every processed event, recorded or not.
  std::uint64_t trace_digest() const { return digest_; }
  std::uint64_t events_processed() const { return processed_; }

 private:
  struct Entry {
    SimTime time;
    std::uint64_t seq;
    int rank;
    std::optional<Message> msg;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  struct Waiter {
    TagPattern pattern;
    std::function<void(Message)> fn;
  };

  void check_rank(Rank r) const;
  void deliver(Message msg);
  void absorb(const TransportEvent& ev);

  int p_;
  SimTime latency_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  bool closed_ = false;
  std::vector<Entry> heap_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::vector<std::vector<Waiter>> waiters_;
  bool record_ = false;
  std::vector<TransportEvent> trace_;
  std::uint64_t digest_ = 0xcbf29ce484222325ull;
  std::uint64_t processed_ = 0;
};

}  // namespace pcoll
