#include "pcoll/schedule.hpp"

#include <algorithm>
#include <queue>
#include <unordered_map>
#include <unordered_set>

namespace pcoll {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::send: return "send";
    case OpKind::recv: return "recv";
    case OpKind::compute: return "compute";
    case OpKind::nop: return "nop";
  }
  return "nop";
}

const OpNode* Schedule::find(OpId id) const {
  for (const auto& op : ops) {
    if (op.id == id) return &op;
  }
  return nullptr;
}

void Schedule::validate(int p, Rank self) const {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::invalid_schedule, why); };

  std::unordered_map<OpId, std::size_t> index;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (!index.emplace(ops[i].id, i).second) {
      throw Error(ErrorCode::duplicate_op_id, "op id " + std::to_string(ops[i].id));
    }
  }
  if (slot_count == 0) bad("schedule needs at least one slot");
  auto check_slot = [&](SlotId s) {
    if (s >= slot_count) bad("slot " + std::to_string(s) + " out of range");
  };
  check_slot(send_slot);
  check_slot(result_slot);
  for (SlotId s : persistent_slots) check_slot(s);

  auto require_nop = [&](OpId id, const char* what) {
    auto it = index.find(id);
    if (it == index.end()) bad(std::string(what) + " op missing");
    const OpNode& n = ops[it->second];
    if (n.kind != OpKind::nop || !n.deps.empty()) bad(std::string(what) + " must be a dependency-free NOP");
  };
  if (entry) require_nop(*entry, "entry");
  if (gate) require_nop(*gate, "gate");
  if (!index.count(completion)) bad("completion op missing");
  if (snapshot && !index.count(*snapshot)) bad("snapshot op missing");

  for (const auto& op : ops) {
    for (OpId d : op.deps) {
      if (!index.count(d)) bad("op " + std::to_string(op.id) + " depends on unknown op " + std::to_string(d));
      if (d == op.id) throw Error(ErrorCode::cycle_detected, "op " + std::to_string(op.id) + " depends on itself");
    }
    auto check_peer = [&](Rank peer) {
      if (peer.id < 0 || peer.id >= p) bad("peer rank out of range");
      if (peer == self) bad("self-addressed communication op");
    };
    switch (op.kind) {
      case OpKind::send: {
        const auto* sp = std::get_if<SendParams>(&op.params);
        if (!sp) bad("send op without send params");
        check_peer(sp->peer);
        if (sp->source) check_slot(*sp->source);
        break;
      }
      case OpKind::recv: {
        const auto* rp = std::get_if<RecvParams>(&op.params);
        if (!rp) bad("recv op without recv params");
        check_peer(rp->peer);
        if (rp->target) check_slot(*rp->target);
        break;
      }
      case OpKind::compute: {
        const auto* cp = std::get_if<ComputeParams>(&op.params);
        if (!cp) bad("compute op without compute params");
        check_slot(cp->target);
        check_slot(cp->source);
        if (cp->target == cp->source) bad("compute op reduces a slot into itself");
        break;
      }
      case OpKind::nop:
        break;
    }
  }

  // Kahn's algorithm: every op must be reachable in topological order.
  std::vector<std::size_t> indegree(ops.size(), 0);
  std::vector<std::vector<std::size_t>> out(ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    for (OpId d : ops[i].deps) {
      out[index[d]].push_back(i);
      ++indegree[i];
    }
  }
  std::queue<std::size_t> ready;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    auto i = ready.front();
    ready.pop();
    ++seen;
    for (auto j : out[i]) {
      if (--indegree[j] == 0) ready.push(j);
    }
  }
  if (seen != ops.size()) throw Error(ErrorCode::cycle_detected, "schedule graph has a cycle");

  if (persistent) {
    // Fixpoint with the entry and all receives held back.
    std::vector<bool> done(ops.size(), false);
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        const OpNode& n = ops[i];
        if (done[i] || n.kind == OpKind::recv || (entry && n.id == *entry)) continue;
        bool ok = n.dep_logic == DepLogic::all;
        if (n.deps.empty()) ok = true;
        for (OpId d : n.deps) {
          bool dd = done[index[d]];
          ok = n.dep_logic == DepLogic::all ? (ok && dd) : (ok || dd);
        }
        if (ok) {
          done[i] = true;
          changed = true;
        }
      }
    }
    if (done[index[completion]]) bad("persistent schedule completes without activation");
  }
}

ScheduleBuilder::ScheduleBuilder(std::uint32_t collective, ReductionLayout layout) {
  s_.collective = collective;
  s_.layout = std::move(layout);
  s_.slot_count = 0;
}

SlotId ScheduleBuilder::add_slot() { return s_.slot_count++; }

OpId ScheduleBuilder::add(OpKind kind, decltype(OpNode::params) params, std::vector<OpId> deps,
                          DepLogic logic) {
  OpNode n;
  n.id = static_cast<OpId>(s_.ops.size());
  n.kind = kind;
  n.params = std::move(params);
  n.deps = std::move(deps);
  n.dep_logic = logic;
  s_.ops.push_back(std::move(n));
  return s_.ops.back().id;
}

OpId ScheduleBuilder::nop(std::vector<OpId> deps, DepLogic logic) {
  return add(OpKind::nop, std::monostate{}, std::move(deps), logic);
}

OpId ScheduleBuilder::send(SendParams p, std::vector<OpId> deps, DepLogic logic) {
  return add(OpKind::send, p, std::move(deps), logic);
}

OpId ScheduleBuilder::recv(RecvParams p, std::vector<OpId> deps, DepLogic logic) {
  return add(OpKind::recv, p, std::move(deps), logic);
}

OpId ScheduleBuilder::compute(ComputeParams p, std::vector<OpId> deps, DepLogic logic) {
  return add(OpKind::compute, p, std::move(deps), logic);
}

}  // namespace pcoll
