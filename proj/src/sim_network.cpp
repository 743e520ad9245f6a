#include "pcoll/sim_network.hpp"

#include <algorithm>
#include <string>

namespace pcoll {

SimNetwork::SimNetwork(int p, SimTime link_latency_us) : p_(p), latency_(link_latency_us) {
  if (p < 1) throw Error(ErrorCode::invalid_argument, "process count must be >= 1");
  if (link_latency_us < 0) throw Error(ErrorCode::invalid_argument, "negative link latency");
  boxes_.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) boxes_.push_back(std::make_unique<Mailbox>());
  waiters_.resize(static_cast<std::size_t>(p));
}

void SimNetwork::check_rank(Rank r) const {
  if (r.id < 0 || r.id >= p_) {
    throw Error(ErrorCode::unknown_rank, "rank " + std::to_string(r.id));
  }
}

void SimNetwork::send(Message msg) {
  if (closed_) throw Error(ErrorCode::transport_closed, "send on closed simulator");
  check_rank(msg.src);
  check_rank(msg.dst);
  Entry e{now_ + latency_, next_seq_++, msg.dst.id, std::move(msg), {}};
  heap_.push_back(std::move(e));
  std::push_heap(heap_.begin(), heap_.end(), Later{});
}

Mailbox& SimNetwork::mailbox(Rank r) {
  check_rank(r);
  return *boxes_[static_cast<std::size_t>(r.id)];
}

void SimNetwork::close() {
  closed_ = true;
  for (auto& b : boxes_) b->close();
}

void SimNetwork::schedule_at(SimTime t, Rank owner, std::function<void()> fn) {
  check_rank(owner);
  if (t < now_) t = now_;
  heap_.push_back(Entry{t, next_seq_++, owner.id, std::nullopt, std::move(fn)});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
}

void SimNetwork::recv_match(Rank dst, TagPattern pattern, std::function<void(Message)> fn) {
  check_rank(dst);
  if (auto m = boxes_[static_cast<std::size_t>(dst.id)]->try_match(pattern)) {
    fn(std::move(*m));
    return;
  }
  waiters_[static_cast<std::size_t>(dst.id)].push_back({std::move(pattern), std::move(fn)});
}

void SimNetwork::deliver(Message msg) {
  auto& ws = waiters_[static_cast<std::size_t>(msg.dst.id)];
  for (auto it = ws.begin(); it != ws.end(); ++it) {
    if (it->pattern.matches(msg)) {
      auto fn = std::move(it->fn);
      ws.erase(it);
      fn(std::move(msg));
      return;
    }
  }
  boxes_[static_cast<std::size_t>(msg.dst.id)]->deposit(std::move(msg));
}

void SimNetwork::absorb(const TransportEvent& ev) {
  auto mix = [this](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      digest_ ^= (v >> (8 * i)) & 0xFF;
      digest_ *= 0x100000001b3ull;
    }
  };
  mix(static_cast<std::uint64_t>(ev.time));
  mix(ev.seq);
  mix(static_cast<std::uint64_t>(ev.kind));
  mix(static_cast<std::uint64_t>(ev.rank));
  mix(static_cast<std::uint64_t>(ev.src));
  mix(ev.tag.collective);
  mix(ev.tag.round);
  mix(static_cast<std::uint64_t>(ev.tag.phase));
  mix(ev.tag.step);
  mix(ev.bytes);
  ++processed_;
  if (record_) trace_.push_back(ev);
}

bool SimNetwork::step() {
  if (heap_.empty()) return false;
  std::pop_heap(heap_.begin(), heap_.end(), Later{});
  Entry e = std::move(heap_.back());
  heap_.pop_back();
  now_ = e.time;

  TransportEvent ev;
  ev.time = e.time;
  ev.seq = e.seq;
  ev.rank = e.rank;
  if (e.msg) {
    ev.kind = TransportEvent::Kind::deliver;
    ev.src = e.msg->src.id;
    ev.tag = e.msg->tag;
    ev.bytes = e.msg->payload.size();
    absorb(ev);
    if (!closed_) deliver(std::move(*e.msg));
  } else {
    ev.kind = TransportEvent::Kind::timer;
    absorb(ev);
    e.fn();
  }
  return true;
}

void SimNetwork::run() {
  while (step()) {
  }
}

bool SimNetwork::run_until(const std::function<bool()>& done) {
  while (!done()) {
    if (!step()) return done();
  }
  return true;
}

}  // namespace pcoll
