#include "pcoll/socket_cluster.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <barrier>
#include <cerrno>
#include <cstring>
#include <map>

#include "pcoll/collectives.hpp"
#include "pcoll/delay.hpp"
#include "pcoll/harness.hpp"

namespace pcoll {

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(ErrorCode::io_error, what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::byte* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(fd, data, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::transport_closed, std::string("send: ") + std::strerror(errno));
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
}

// false on orderly shutdown
bool read_all(int fd, std::byte* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::recv(fd, data, n, 0);
    if (k == 0) return false;
    if (k < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
  return true;
}

template <class T>
void put(Bytes& b, T v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  b.insert(b.end(), p, p + sizeof(T));
}

template <class T>
T get(const Bytes& b, std::size_t& off) {
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

constexpr std::size_t kHeader = 4 + 4 + 4 + 8 + 1 + 4;

int listener(std::uint16_t& port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  a.sin_port = 0;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) < 0) sys_fail("bind");
  if (::listen(fd, 128) < 0) sys_fail("listen");
  socklen_t len = sizeof a;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len) < 0) sys_fail("getsockname");
  port = ntohs(a.sin_port);
  return fd;
}

void no_delay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

SocketNetwork::SocketNetwork(int p) : p_(p), start_(std::chrono::steady_clock::now()) {
  if (p < 1) throw Error(ErrorCode::invalid_argument, "p must be >= 1");
  const auto n = static_cast<std::size_t>(p);
  for (std::size_t i = 0; i < n; ++i) boxes_.push_back(std::make_unique<Mailbox>());
  fd_.assign(n, std::vector<int>(n, -1));
  for (std::size_t i = 0; i < n * n; ++i) write_mu_.push_back(std::make_unique<std::mutex>());

  std::vector<int> listen_fd(n);
  std::vector<std::uint16_t> port(n);
  for (std::size_t j = 0; j < n; ++j) listen_fd[j] = listener(port[j]);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      const int c = ::socket(AF_INET, SOCK_STREAM, 0);
      if (c < 0) sys_fail("socket");
      sockaddr_in a{};
      a.sin_family = AF_INET;
      a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
      a.sin_port = htons(port[static_cast<std::size_t>(j)]);
      if (::connect(c, reinterpret_cast<sockaddr*>(&a), sizeof a) < 0) sys_fail("connect");
      const std::int32_t hello = i;
      write_all(c, reinterpret_cast<const std::byte*>(&hello), sizeof hello);
      const int s = ::accept(listen_fd[static_cast<std::size_t>(j)], nullptr, nullptr);
      if (s < 0) sys_fail("accept");
      std::int32_t who = -1;
      if (!read_all(s, reinterpret_cast<std::byte*>(&who), sizeof who) || who != i) {
        throw Error(ErrorCode::io_error, "bad handshake");
      }
      no_delay(c);
      no_delay(s);
      fd_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = c;
      fd_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = s;
    }
  }
  for (int fd : listen_fd) ::close(fd);
  for (int r = 0; r < p; ++r) readers_.emplace_back([this, r] { receive_loop(r); });
}

SocketNetwork::~SocketNetwork() {
  close();
  for (auto& row : fd_) {
    for (int fd : row) {
      if (fd >= 0) ::close(fd);
    }
  }
}

Mailbox& SocketNetwork::mailbox(Rank r) {
  if (r.id < 0 || r.id >= p_) throw Error(ErrorCode::unknown_rank, "rank " + std::to_string(r.id));
  return *boxes_[static_cast<std::size_t>(r.id)];
}

SimTime SocketNetwork::now_us() const {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start_).count();
}

void SocketNetwork::send(Message msg) {
  if (msg.dst.id < 0 || msg.dst.id >= p_ || msg.src.id < 0 || msg.src.id >= p_) {
    throw Error(ErrorCode::unknown_rank, "send " + std::to_string(msg.src.id) + "->" + std::to_string(msg.dst.id));
  }
  if (closed_) throw Error(ErrorCode::transport_closed, "send after close");
  ++sent_;
  if (msg.src == msg.dst) {
    mailbox(msg.dst).deposit(std::move(msg));
    return;
  }
  Bytes frame;
  frame.reserve(4 + kHeader + msg.payload.size());
  put<std::uint32_t>(frame, static_cast<std::uint32_t>(kHeader + msg.payload.size()));
  put<std::int32_t>(frame, msg.src.id);
  put<std::int32_t>(frame, msg.dst.id);
  put<std::uint32_t>(frame, msg.tag.collective);
  put<std::uint64_t>(frame, msg.tag.round);
  put<std::uint8_t>(frame, static_cast<std::uint8_t>(msg.tag.phase));
  put<std::uint32_t>(frame, msg.tag.step);
  frame.insert(frame.end(), msg.payload.begin(), msg.payload.end());
  const auto a = static_cast<std::size_t>(msg.src.id);
  const auto b = static_cast<std::size_t>(msg.dst.id);
  std::lock_guard<std::mutex> lock(*write_mu_[a * static_cast<std::size_t>(p_) + b]);
  write_all(fd_[a][b], frame.data(), frame.size());
}

void SocketNetwork::receive_loop(int rank) {
  const auto r = static_cast<std::size_t>(rank);
  std::vector<pollfd> fds;
  for (std::size_t j = 0; j < fd_.size(); ++j) {
    if (j != r) fds.push_back(pollfd{fd_[r][j], POLLIN, 0});
  }
  while (!closed_ && !fds.empty()) {
    if (::poll(fds.data(), fds.size(), 100) < 0) {
      if (errno == EINTR) continue;
      return;
    }
    for (auto& pf : fds) {
      if (pf.fd < 0 || !(pf.revents & (POLLIN | POLLHUP | POLLERR))) continue;
      std::uint32_t len = 0;
      Bytes body;
      bool ok = read_all(pf.fd, reinterpret_cast<std::byte*>(&len), sizeof len) && len >= kHeader;
      if (ok) {
        body.resize(len);
        ok = read_all(pf.fd, body.data(), len);
      }
      if (!ok) {
        pf.fd = -1;  // peer gone
        continue;
      }
      std::size_t off = 0;
      Message m;
      m.src = Rank(get<std::int32_t>(body, off));
      m.dst = Rank(get<std::int32_t>(body, off));
      m.tag.collective = get<std::uint32_t>(body, off);
      m.tag.round = get<std::uint64_t>(body, off);
      m.tag.phase = static_cast<Phase>(get<std::uint8_t>(body, off));
      m.tag.step = get<std::uint32_t>(body, off);
      m.payload.assign(body.begin() + static_cast<std::ptrdiff_t>(off), body.end());
      boxes_[r]->deposit(std::move(m));
    }
  }
}

void SocketNetwork::close() {
  if (closed_.exchange(true)) return;
  for (auto& row : fd_) {
    for (int fd : row) {
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    }
  }
  for (auto& t : readers_) {
    if (t.joinable()) t.join();
  }
  for (auto& b : boxes_) b->close();
}

ProgressMode parse_progress_mode(const std::string& s) {
  if (s == "caller") return ProgressMode::caller;
  if (s == "auxiliary") return ProgressMode::auxiliary;
  throw Error(ErrorCode::config_invalid, "unknown progress mode '" + s + "'");
}

const char* to_string(ProgressMode m) { return m == ProgressMode::caller ? "caller" : "auxiliary"; }

ThreadedEngine::ThreadedEngine(Rank self, Transport& transport, ProgressMode mode)
    : transport_(transport), self_(self), mode_(mode), engine_(self, transport) {
  if (mode_ == ProgressMode::auxiliary) aux_ = std::thread([this] { aux_loop(); });
}

ThreadedEngine::~ThreadedEngine() { stop(); }

void ThreadedEngine::stop() {
  if (stop_.exchange(true)) return;
  transport_.mailbox(self_).close();
  if (aux_.joinable()) aux_.join();
}

void ThreadedEngine::aux_loop() {
  auto& box = transport_.mailbox(self_);
  while (!stop_) {
    Message m;
    try {
      m = box.wait_match(TagPattern::any());
    } catch (const Error&) {
      return;  // closed
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      engine_.deliver(std::move(m));
    }
    cv_.notify_all();
  }
}

void ThreadedEngine::progress() {
  std::lock_guard<std::mutex> lock(mu_);
  engine_.drain_mailbox();
}

void ThreadedEngine::wait_until(const std::function<bool(Engine&)>& done) {
  if (mode_ == ProgressMode::auxiliary) {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return done(engine_); });
    return;
  }
  auto& box = transport_.mailbox(self_);
  for (;;) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      engine_.drain_mailbox();
      if (done(engine_)) return;
    }
    Message m = box.wait_match(TagPattern::any());
    std::lock_guard<std::mutex> lock(mu_);
    engine_.deliver(std::move(m));
  }
}

std::vector<BenchRecord> bench_socket(const RunConfig& cfg, Flavor flavor) {
  const int p = cfg.p;
  SocketNetwork net(p);
  CollectiveConfig cc;
  cc.p = p;
  cc.flavor = flavor;
  cc.vector_len = cfg.vector_len;
  cc.seed = cfg.seed;

  std::vector<std::unique_ptr<ThreadedEngine>> engines;
  std::vector<std::unique_ptr<AllreduceHandle>> handles;
  std::vector<std::map<Generation, int>> naps(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    engines.push_back(std::make_unique<ThreadedEngine>(Rank(r), net, cfg.progress));
    engines.back()->with([&](Engine& e) {
      handles.push_back(std::make_unique<AllreduceHandle>(e, cc));
      auto* sink = &naps[static_cast<std::size_t>(r)];
      handles.back()->on_complete([sink](const CollectiveResult& res) { (*sink)[res.round] = res.nap; });
    });
  }

  std::vector<BenchRecord> out(static_cast<std::size_t>(p) * cfg.rounds);
  std::vector<int> initiator(cfg.rounds, -1);
  std::vector<SimTime> first_enter(cfg.rounds, 0);
  std::barrier sync_point(p);
  std::mutex init_mu;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(p));

  auto worker = [&](int r) {
    try {
      auto& te = *engines[static_cast<std::size_t>(r)];
      auto& h = *handles[static_cast<std::size_t>(r)];
      std::vector<double> v(cfg.vector_len, static_cast<double>(r + 1));
      const auto payload = ContributionPayload::fresh(cc, Rank(r), v);
      for (Generation t = 0; t < cfg.rounds; ++t) {
        sync_point.arrive_and_wait();
        std::this_thread::sleep_for(std::chrono::microseconds(inject_delay(Rank(r), t, cfg.delay, p)));
        const SimTime enter = net.now_us();
        const JoinStatus st = te.with([&](Engine&) { return h.join(t, payload); });
        if (st == JoinStatus::on_time) te.wait_until([&](Engine&) { return h.round_done(t); });
        const SimTime exit = net.now_us();
        // the round must be over here too before the next barrier
        te.wait_until([&](Engine&) { return h.round_done(t); });
        auto& rec = out[static_cast<std::size_t>(t) * static_cast<std::size_t>(p) + static_cast<std::size_t>(r)];
        rec.flavor = flavor;
        rec.round = t;
        rec.rank = r;
        rec.latency_us = exit - enter;
        rec.nap = te.with([&](Engine&) { return naps[static_cast<std::size_t>(r)][t]; });
        if (flavor == Flavor::majority) rec.initiator = initiator_for_round(cc.seed, t, p).id;
        if (flavor == Flavor::solo && st == JoinStatus::on_time) {
          // earliest on-time joiner
          std::lock_guard<std::mutex> lock(init_mu);
          if (initiator[t] < 0 || enter < first_enter[t]) {
            initiator[t] = r;
            first_enter[t] = enter;
          }
        }
      }
      sync_point.arrive_and_wait();
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
      sync_point.arrive_and_drop();
    }
  };
  std::vector<std::thread> threads;
  for (int r = 0; r < p; ++r) threads.emplace_back(worker, r);
  for (auto& t : threads) t.join();
  for (auto& e : engines) e->stop();
  net.close();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (flavor == Flavor::solo) {
    for (auto& rec : out) rec.initiator = initiator[rec.round];
  }
  return out;
}

}  // namespace pcoll
