#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "pcoll/engine.hpp"
#include "pcoll/transport.hpp"

namespace pcoll {

/// P endpoints on 127.0.0.1, fully meshed over TCP. Frames are
/// length-prefixed; one receiver thread per rank polls its inbound sockets
/// and deposits into that rank's mailbox. Delivery order per connection is
/// the send order.
class SocketNetwork final : public Transport {
 public:
  explicit SocketNetwork(int p);
  ~SocketNetwork() override;

  SocketNetwork(const SocketNetwork&) = delete;
  SocketNetwork& operator=(const SocketNetwork&) = delete;

  int size() const override { return p_; }
  void send(Message msg) override;
  Mailbox& mailbox(Rank r) override;
  void close() override;
  /// Steady-clock microseconds since construction.
  SimTime now_us() const override;

  std::uint64_t frames_sent() const { return sent_.load(); }

 private:
  void receive_loop(int rank);

  int p_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::vector<std::vector<int>> fd_;  // fd_[a][b]: a's end of the a-b connection
  std::vector<std::unique_ptr<std::mutex>> write_mu_;
  std::vector<std::thread> readers_;
  std::atomic<bool> closed_{false};
  std::atomic<std::uint64_t> sent_{0};
};

enum class ProgressMode {
  caller,     // the engine advances only inside progress() / wait_until()
  auxiliary,  // a helper thread delivers inbound messages as they arrive
};

ProgressMode parse_progress_mode(const std::string& s);
const char* to_string(ProgressMode m);

/// An engine shared between its owner thread and, optionally, a progress
/// thread. All engine access goes through with(), which serializes it.
class ThreadedEngine {
 public:
  ThreadedEngine(Rank self, Transport& transport, ProgressMode mode);
  ~ThreadedEngine();

  ThreadedEngine(const ThreadedEngine&) = delete;
  ThreadedEngine& operator=(const ThreadedEngine&) = delete;

  template <class F>
  decltype(auto) with(F&& f) {
    std::lock_guard<std::mutex> lock(mu_);
    return f(engine_);
  }

  /// Delivers whatever is queued without blocking.
  void progress();

  /// Blocks until `done` holds. In caller mode the waiting thread delivers
  /// inbound messages itself.
  void wait_until(const std::function<bool(Engine&)>& done);

  ProgressMode mode() const { return mode_; }
  void stop();

 private:
  void aux_loop();

  Transport& transport_;
  Rank self_;
  ProgressMode mode_;
  std::mutex mu_;
  std::condition_variable cv_;
  Engine engine_;
  std::thread aux_;
  std::atomic<bool> stop_{false};
};

struct RunConfig;
struct BenchRecord;
enum class Flavor : std::uint8_t;

/// Wall-clock microbenchmark with one thread per rank over SocketNetwork.
std::vector<BenchRecord> bench_socket(const RunConfig& cfg, Flavor flavor);

}  // namespace pcoll
