#include "pcoll/engine.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace pcoll {

const char* to_string(TraceEvent::Action a) {
  switch (a) {
    case TraceEvent::Action::fire: return "fire";
    case TraceEvent::Action::complete: return "complete";
    case TraceEvent::Action::retire: return "retire";
  }
  return "fire";
}

std::string to_json_line(const TraceEvent& ev) {
  nlohmann::json j;
  j["time"] = ev.time;
  j["rank"] = ev.rank;
  j["collective"] = ev.collective;
  j["op_id"] = ev.op_id;
  j["kind"] = to_string(ev.kind);
  j["generation"] = ev.generation;
  j["action"] = to_string(ev.action);
  return j.dump();
}

Engine::Engine(Rank self, Transport& transport) : self_(self), transport_(transport) {
  if (self.id < 0 || self.id >= transport.size()) {
    throw Error(ErrorCode::unknown_rank, "engine rank " + std::to_string(self.id));
  }
}

Engine::Runtime& Engine::rt(ScheduleHandle h) {
  if (h >= runtimes_.size()) throw Error(ErrorCode::invalid_argument, "unknown schedule handle");
  return runtimes_[h];
}

const Engine::Runtime& Engine::rt(ScheduleHandle h) const {
  if (h >= runtimes_.size()) throw Error(ErrorCode::invalid_argument, "unknown schedule handle");
  return runtimes_[h];
}

std::size_t Engine::idx(const Runtime& r, OpId id) const {
  auto it = r.index.find(id);
  if (it == r.index.end()) throw Error(ErrorCode::invalid_argument, "unknown op id " + std::to_string(id));
  return it->second;
}

ScheduleHandle Engine::commit(Schedule s) {
  s.validate(transport_.size(), self_);
  if (by_collective_.count(s.collective)) {
    throw Error(ErrorCode::invalid_schedule,
                "collective id " + std::to_string(s.collective) + " already committed");
  }
  Runtime r;
  for (std::size_t i = 0; i < s.ops.size(); ++i) r.index.emplace(s.ops[i].id, i);
  r.dependents.resize(s.ops.size());
  for (std::size_t i = 0; i < s.ops.size(); ++i) {
    for (OpId d : s.ops[i].deps) r.dependents[r.index[d]].push_back(i);
  }
  for (auto& deps : r.dependents) {
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
  }
  r.state.assign(s.ops.size(), OpState::pending);
  r.persistent_slot.assign(s.slot_count, false);
  for (SlotId p : s.persistent_slots) r.persistent_slot[p] = true;
  r.slots.assign(s.slot_count, s.layout.identity());
  r.recv_buffer = s.layout.identity();
  for (auto& op : s.ops) op.consumed = false;
  r.sched = std::move(s);

  auto h = static_cast<ScheduleHandle>(runtimes_.size());
  by_collective_.emplace(r.sched.collective, h);
  runtimes_.push_back(std::move(r));
  start_generation(h);
  pump();
  return h;
}

bool Engine::satisfied(const Runtime& r, std::size_t i) const {
  const OpNode& n = r.sched.ops[i];
  if (n.deps.empty()) return true;
  auto is_done = [&](OpId d) { return r.state[r.index.at(d)] == OpState::done; };
  if (n.dep_logic == DepLogic::all) return std::all_of(n.deps.begin(), n.deps.end(), is_done);
  return std::any_of(n.deps.begin(), n.deps.end(), is_done);
}

void Engine::emit(const Runtime& r, std::size_t i, TraceEvent::Action a) {
  if (!trace_) return;
  const OpNode& n = r.sched.ops[i];
  trace_(TraceEvent{transport_.now_us(), self_.id, r.sched.collective, n.id, n.kind, r.gen, a});
}

void Engine::try_fire(ScheduleHandle h, std::size_t i) {
  Runtime& r = rt(h);
  if (r.complete || r.state[i] != OpState::pending || !satisfied(r, i)) return;
  fire_now(h, i);
}

void Engine::fire_now(ScheduleHandle h, std::size_t i) {
  Runtime& r = rt(h);
  OpNode& n = r.sched.ops[i];
  n.consumed = true;
  r.state[i] = n.kind == OpKind::recv ? OpState::posted : OpState::done;
  emit(r, i, TraceEvent::Action::fire);

  switch (n.kind) {
    case OpKind::nop:
      break;
    case OpKind::send: {
      const auto& sp = std::get<SendParams>(n.params);
      Message m;
      m.src = self_;
      m.dst = sp.peer;
      m.tag = Tag{r.sched.collective, r.gen, sp.phase, sp.step};
      if (sp.source) m.payload = r.slots[*sp.source];
      transport_.send(std::move(m));
      break;
    }
    case OpKind::compute: {
      const auto& cp = std::get<ComputeParams>(n.params);
      r.sched.layout.reduce_into(r.slots[cp.target], r.slots[cp.source]);
      if (cp.consume_source) {
        Bytes taken = r.slots[cp.source];
        r.sched.layout.fill_identity(r.slots[cp.source]);
        for (const auto& fn : r.snapshot_fns) {
          deferred_.push_back([fn, g = r.gen, taken] { fn(g, taken); });
        }
      }
      break;
    }
    case OpKind::recv:
      post_from_unexpected(h, i);
      return;
  }
  complete_op(h, i);
}

void Engine::complete_op(ScheduleHandle h, std::size_t i) {
  Runtime& r = rt(h);
  r.state[i] = OpState::done;
  if (r.sched.ops[i].kind == OpKind::recv) emit(r, i, TraceEvent::Action::complete);
  work_.push_back(Work{h, i, r.gen});
  if (r.sched.ops[i].id == r.sched.completion) finish_generation(h);
}

bool Engine::match_recv(ScheduleHandle h, std::size_t i, Message& msg) {
  Runtime& r = rt(h);
  const auto& rp = std::get<RecvParams>(r.sched.ops[i].params);
  if (rp.target) {
    if (msg.payload.size() != r.sched.layout.bytes()) {
      throw Error(ErrorCode::length_mismatch, "payload of " + std::to_string(msg.payload.size()) +
                                                  " bytes, expected " +
                                                  std::to_string(r.sched.layout.bytes()));
    }
    r.slots[*rp.target] = std::move(msg.payload);
  }
  complete_op(h, i);
  return true;
}

void Engine::post_from_unexpected(ScheduleHandle h, std::size_t i) {
  Runtime& r = rt(h);
  const auto& rp = std::get<RecvParams>(r.sched.ops[i].params);
  auto it = std::find_if(unexpected_.begin(), unexpected_.end(), [&](const Message& m) {
    return m.tag.collective == r.sched.collective && m.tag.round == r.gen && m.src == rp.peer &&
           m.tag.phase == rp.phase && m.tag.step == rp.step;
  });
  if (it == unexpected_.end()) return;
  Message m = std::move(*it);
  unexpected_.erase(it);
  match_recv(h, i, m);
}

void Engine::start_generation(ScheduleHandle h) {
  Runtime& r = rt(h);
  const Generation g = r.gen;
  for (std::size_t i = 0; i < r.sched.ops.size(); ++i) {
    Runtime& cur = rt(h);
    if (cur.complete || cur.gen != g) return;
    const OpNode& n = cur.sched.ops[i];
    if (!n.deps.empty() || cur.state[i] != OpState::pending) continue;
    if (cur.sched.entry && n.id == *cur.sched.entry) continue;
    if (cur.sched.gate && n.id == *cur.sched.gate && cur.holds.count(g)) continue;
    fire_now(h, i);
  }
}

void Engine::finish_generation(ScheduleHandle h) {
  Runtime& r = rt(h);
  const Generation g = r.gen;
  r.recv_buffer = r.slots[r.sched.result_slot];
  r.recv_gen = g;
  for (std::size_t i = 0; i < r.state.size(); ++i) {
    if (r.state[i] == OpState::pending || r.state[i] == OpState::posted) {
      r.state[i] = OpState::retired;
      emit(r, i, TraceEvent::Action::retire);
    }
  }
  r.complete = true;
  for (const auto& fn : r.completion_fns) {
    deferred_.push_back([fn, g, result = r.recv_buffer] { fn(g, result); });
  }
  if (r.sched.persistent) advance_generation(h);
}

void Engine::advance_generation(ScheduleHandle h) {
  Runtime& r = rt(h);
  ++r.gen;
  r.complete = false;
  std::fill(r.state.begin(), r.state.end(), OpState::pending);
  for (auto& op : r.sched.ops) op.consumed = false;
  for (std::size_t s = 0; s < r.slots.size(); ++s) {
    if (!r.persistent_slot[s]) r.sched.layout.fill_identity(r.slots[s]);
  }
  r.holds.erase(r.holds.begin(), r.holds.lower_bound(r.gen));
  const auto before = unexpected_.size();
  std::erase_if(unexpected_, [&](const Message& m) {
    return m.tag.collective == r.sched.collective && m.tag.round < r.gen;
  });
  stale_dropped_ += before - unexpected_.size();
  start_generation(h);
}

void Engine::open_gate(ScheduleHandle h) {
  Runtime& r = rt(h);
  if (r.complete || !r.sched.gate) return;
  auto gi = idx(r, *r.sched.gate);
  if (r.state[gi] == OpState::pending && !r.holds.count(r.gen)) fire_now(h, gi);
}

void Engine::pump() {
  if (pumping_) return;
  pumping_ = true;
  try {
    while (!work_.empty() || !deferred_.empty()) {
      if (!work_.empty()) {
        Work w = work_.front();
        work_.pop_front();
        Runtime& r = rt(w.h);
        if (w.gen != r.gen || r.state[w.op] != OpState::done) continue;
        auto deps = r.dependents[w.op];
        for (auto j : deps) {
          if (rt(w.h).gen != w.gen) break;
          try_fire(w.h, j);
        }
        continue;
      }
      auto fn = std::move(deferred_.front());
      deferred_.pop_front();
      fn();
    }
  } catch (...) {
    pumping_ = false;
    work_.clear();
    deferred_.clear();
    throw;
  }
  pumping_ = false;
}

void Engine::activate_internal(ScheduleHandle h) {
  Runtime& r = rt(h);
  if (!r.complete) {
    r.holds.erase(r.gen);
    if (r.sched.entry) {
      auto ei = idx(r, *r.sched.entry);
      if (r.state[ei] == OpState::pending) fire_now(h, ei);
    }
    open_gate(h);
  }
  pump();
}

void Engine::fire(ScheduleHandle h, OpId op) {
  Runtime& r = rt(h);
  auto i = idx(r, op);
  if (r.complete || r.state[i] != OpState::pending) return;
  if (!satisfied(r, i)) {
    throw Error(ErrorCode::deps_unsatisfied, "op " + std::to_string(op) + " has unsatisfied dependencies");
  }
  fire_now(h, i);
  pump();
}

ScheduleHandle Engine::replicate(ScheduleHandle h) {
  Runtime& r = rt(h);
  if (!r.complete) {
    throw Error(ErrorCode::replicate_before_completion,
                "generation " + std::to_string(r.gen) + " still executing");
  }
  advance_generation(h);
  pump();
  return h;
}

void Engine::deliver(Message msg) {
  auto it = by_collective_.find(msg.tag.collective);
  if (it == by_collective_.end()) {
    unexpected_.push_back(std::move(msg));
    return;
  }
  const ScheduleHandle h = it->second;
  Runtime& r = rt(h);
  if (msg.tag.round < r.gen || (msg.tag.round == r.gen && r.complete)) {
    ++stale_dropped_;
    return;
  }
  if (msg.tag.round == r.gen) {
    for (std::size_t i = 0; i < r.sched.ops.size(); ++i) {
      if (r.state[i] != OpState::posted) continue;
      const auto& rp = std::get<RecvParams>(r.sched.ops[i].params);
      if (rp.peer == msg.src && rp.phase == msg.tag.phase && rp.step == msg.tag.step) {
        match_recv(h, i, msg);
        pump();
        return;
      }
    }
  }
  unexpected_.push_back(std::move(msg));
}

std::size_t Engine::drain_mailbox() {
  auto msgs = transport_.mailbox(self_).take_all();
  for (auto& m : msgs) deliver(std::move(m));
  return msgs.size();
}

void Engine::hold(ScheduleHandle h, Generation g) {
  Runtime& r = rt(h);
  if (g >= r.gen) r.holds.insert(g);
}

void Engine::release_holds(ScheduleHandle h, Generation upto) {
  Runtime& r = rt(h);
  r.holds.erase(r.holds.begin(), r.holds.upper_bound(upto));
  open_gate(h);
  pump();
}

void Engine::unhold(ScheduleHandle h, Generation g) {
  Runtime& r = rt(h);
  if (r.holds.erase(g) && g == r.gen) {
    open_gate(h);
    pump();
  }
}

bool Engine::held(ScheduleHandle h, Generation g) const { return rt(h).holds.count(g) > 0; }

void Engine::accumulate_send(ScheduleHandle h, std::span<const std::byte> data) {
  Runtime& r = rt(h);
  r.sched.layout.reduce_into(r.slots[r.sched.send_slot], data);
}

std::span<std::byte> Engine::send_buffer(ScheduleHandle h) {
  Runtime& r = rt(h);
  return r.slots[r.sched.send_slot];
}

const Bytes& Engine::send_buffer_view(ScheduleHandle h) const {
  const Runtime& r = rt(h);
  return r.slots[r.sched.send_slot];
}

const Bytes& Engine::recv_buffer(ScheduleHandle h) const { return rt(h).recv_buffer; }

std::optional<Generation> Engine::recv_generation(ScheduleHandle h) const { return rt(h).recv_gen; }

Generation Engine::generation(ScheduleHandle h) const { return rt(h).gen; }

bool Engine::completed(ScheduleHandle h) const { return rt(h).complete; }

bool Engine::consumed(ScheduleHandle h, OpId op) const {
  const Runtime& r = rt(h);
  auto s = r.state[idx(r, op)];
  return s == OpState::posted || s == OpState::done;
}

bool Engine::snapshot_taken(ScheduleHandle h) const {
  const Runtime& r = rt(h);
  if (r.complete) return true;
  if (!r.sched.snapshot) return false;
  return r.state[idx(r, *r.sched.snapshot)] != OpState::pending;
}

const Schedule& Engine::schedule(ScheduleHandle h) const { return rt(h).sched; }

void Engine::on_complete(ScheduleHandle h, CompletionFn fn) { rt(h).completion_fns.push_back(std::move(fn)); }

void Engine::on_snapshot(ScheduleHandle h, SnapshotFn fn) { rt(h).snapshot_fns.push_back(std::move(fn)); }

}  // namespace pcoll
