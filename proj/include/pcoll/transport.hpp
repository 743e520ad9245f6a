#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "pcoll/types.hpp"

namespace pcoll {

/// Partial tag match; unset fields are wildcards.
struct TagPattern {
  std::optional<Rank> src;
  std::optional<std::uint32_t> collective;
  std::optional<Generation> round;
  std::optional<Phase> phase;
  std::optional<std::uint32_t> step;

  static TagPattern any() { return {}; }
  static TagPattern exact(Rank src, const Tag& tag) {
    return {src, tag.collective, tag.round, tag.phase, tag.step};
  }

  bool matches(const Message& m) const;
};

/// Inbound queue of one process. Thread-safe; delivery order is preserved and
/// matching always returns the oldest matching message.
class Mailbox {
 public:
  void deposit(Message msg);

  std::optional<Message> try_match(const TagPattern& pattern);

  /// Blocks until a matching message arrives. Throws transport_closed.
  Message wait_match(const TagPattern& pattern);

  std::vector<Message> take_all();

  /// Invoked after every deposit, outside the mailbox lock.
  void set_notify(std::function<void()> fn);

  void close();
  bool closed() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  std::function<void()> notify_;
  bool closed_ = false;
};

class Transport {
 public:
  virtual ~Transport() = default;

  virtual int size() const = 0;

  /// Errors: unknown_rank, transport_closed.
  virtual void send(Message msg) = 0;

  virtual Mailbox& mailbox(Rank r) = 0;

  virtual void close() = 0;

  /// Microseconds: virtual time for the simulator, steady-clock time otherwise.
  virtual SimTime now_us() const = 0;
};

}  // namespace pcoll
