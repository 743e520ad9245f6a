#include "pcoll/collectives.hpp"

#include <bit>
#include <cstring>

#include "pcoll/rng.hpp"

namespace pcoll {

namespace {

int ceil_log2(int p) {
  int d = 0;
  while ((1 << d) < p) ++d;
  return d;
}

int floor_pow2(int p) {
  int m = 1;
  while (m * 2 <= p) m *= 2;
  return m;
}

int mod(int a, int p) { return ((a % p) + p) % p; }

}  // namespace

Flavor parse_flavor(const std::string& s) {
  if (s == "sync") return Flavor::sync;
  if (s == "solo") return Flavor::solo;
  if (s == "majority") return Flavor::majority;
  throw Error(ErrorCode::config_invalid, "unknown flavor '" + s + "'");
}

const char* to_string(Flavor f) {
  switch (f) {
    case Flavor::sync: return "sync";
    case Flavor::solo: return "solo";
    case Flavor::majority: return "majority";
  }
  return "sync";
}

void CollectiveConfig::validate() const {
  if (p < 1) throw Error(ErrorCode::invalid_argument, "p must be >= 1");
  if (element == ElementType::i32) throw Error(ErrorCode::invalid_argument, "allreduce elements are f64 or i64");
}

ReductionLayout CollectiveConfig::layout() const {
  return ReductionLayout({Segment{element, ReduceOp::sum, vector_len},
                          Segment{ElementType::i64, ReduceOp::bor, mask_words()}});
}

ContributionPayload ContributionPayload::null(const CollectiveConfig& cfg) {
  return ContributionPayload{cfg.layout().identity()};
}

namespace {

template <typename T>
ContributionPayload make_fresh(const CollectiveConfig& cfg, Rank rank, std::span<const T> data) {
  if (data.size() != cfg.vector_len) {
    throw Error(ErrorCode::length_mismatch, "contribution of " + std::to_string(data.size()) +
                                                " elements, collective has " +
                                                std::to_string(cfg.vector_len));
  }
  if (rank.id < 0 || rank.id >= cfg.p) throw Error(ErrorCode::unknown_rank, "contributor rank");
  ContributionPayload c = ContributionPayload::null(cfg);
  std::memcpy(c.bytes.data(), data.data(), data.size_bytes());
  std::uint64_t word = std::uint64_t{1} << (rank.id % 64);
  std::memcpy(c.bytes.data() + data.size_bytes() + sizeof(std::uint64_t) * static_cast<std::size_t>(rank.id / 64),
              &word, sizeof(word));
  return c;
}

}  // namespace

ContributionPayload ContributionPayload::fresh(const CollectiveConfig& cfg, Rank rank,
                                               std::span<const double> data) {
  if (cfg.element != ElementType::f64) throw Error(ErrorCode::invalid_argument, "collective is not f64");
  return make_fresh<double>(cfg, rank, data);
}

ContributionPayload ContributionPayload::fresh(const CollectiveConfig& cfg, Rank rank,
                                               std::span<const std::int64_t> data) {
  if (cfg.element != ElementType::i64) throw Error(ErrorCode::invalid_argument, "collective is not i64");
  return make_fresh<std::int64_t>(cfg, rank, data);
}

namespace {

std::vector<double> decode_data(const CollectiveConfig& cfg, const Bytes& raw) {
  std::vector<double> out(cfg.vector_len);
  if (cfg.element == ElementType::f64) {
    std::memcpy(out.data(), raw.data(), cfg.vector_len * sizeof(double));
  } else {
    for (std::size_t i = 0; i < cfg.vector_len; ++i) {
      std::int64_t v;
      std::memcpy(&v, raw.data() + i * sizeof(v), sizeof(v));
      out[i] = static_cast<double>(v);
    }
  }
  return out;
}

std::vector<std::uint64_t> decode_mask(const CollectiveConfig& cfg, const Bytes& raw) {
  std::vector<std::uint64_t> mask(cfg.mask_words());
  std::memcpy(mask.data(), raw.data() + cfg.vector_len * element_size(cfg.element),
              mask.size() * sizeof(std::uint64_t));
  return mask;
}

}  // namespace

std::vector<double> ContributionPayload::data(const CollectiveConfig& cfg) const {
  return decode_data(cfg, bytes);
}

std::vector<std::uint64_t> ContributionPayload::mask(const CollectiveConfig& cfg) const {
  return decode_mask(cfg, bytes);
}

bool ContributionPayload::is_null(const CollectiveConfig& cfg) const { return cfg.layout().is_identity(bytes); }

bool CollectiveResult::includes(int rank) const {
  auto w = static_cast<std::size_t>(rank / 64);
  return w < included.size() && ((included[w] >> (rank % 64)) & 1u);
}

CollectiveResult CollectiveResult::decode(const CollectiveConfig& cfg, Generation round, const Bytes& raw) {
  if (raw.size() != cfg.layout().bytes()) throw Error(ErrorCode::length_mismatch, "result payload");
  CollectiveResult r;
  r.round = round;
  r.raw = raw;
  r.u = decode_data(cfg, raw);
  for (auto& v : r.u) v /= static_cast<double>(cfg.p);
  r.included = decode_mask(cfg, raw);
  for (auto w : r.included) r.nap += std::popcount(w);
  return r;
}

Rank initiator_for_round(std::uint64_t seed, Generation round, int p) {
  if (p < 1) throw Error(ErrorCode::invalid_argument, "p must be >= 1");
  return Rank(static_cast<int>(bounded(derive_seed(seed, round), static_cast<std::uint64_t>(p))));
}

int activation_hops(int initiator, int target, int p) {
  return std::popcount(static_cast<unsigned>(mod(target - initiator, p)));
}

AllreducePlan build_allreduce_schedule(const CollectiveConfig& cfg, Rank self) {
  cfg.validate();
  const int p = cfg.p;
  const int r = self.id;
  if (r < 0 || r >= p) throw Error(ErrorCode::unknown_rank, "schedule for rank " + std::to_string(r));

  AllreducePlan plan;
  ScheduleBuilder b(cfg.collective_id, cfg.layout());
  const SlotId send = b.add_slot();
  const SlotId acc = b.add_slot();

  plan.entry = b.nop();
  plan.gate = b.nop();

  if (cfg.flavor != Flavor::sync && p > 1) {
    const int d = ceil_log2(p);
    for (int k = 0; k < d; ++k) {
      plan.activation_recvs.push_back(b.recv(
          RecvParams{Rank(mod(r - (1 << k), p)), Phase::activation, static_cast<std::uint32_t>(k), std::nullopt}));
    }
    for (int j = 0; j < d; ++j) {
      std::vector<OpId> deps{plan.entry};
      for (int k = 0; k < j; ++k) deps.push_back(plan.activation_recvs[static_cast<std::size_t>(k)]);
      plan.activation_sends.push_back(
          b.send(SendParams{Rank(mod(r + (1 << j), p)), Phase::activation, static_cast<std::uint32_t>(j), std::nullopt},
                 std::move(deps), DepLogic::any));
    }
    std::vector<OpId> any{plan.entry};
    any.insert(any.end(), plan.activation_recvs.begin(), plan.activation_recvs.end());
    plan.activated = b.nop(std::move(any), DepLogic::any);
  } else {
    plan.activated = b.nop({plan.entry}, DepLogic::any);
  }

  plan.reduction_start = b.nop({plan.activated, plan.gate}, DepLogic::all);
  plan.snapshot = b.compute(ComputeParams{acc, send, true}, {plan.reduction_start});
  OpId last = plan.snapshot;
  SlotId result = acc;

  const int m = floor_pow2(p);
  const int extra = p - m;
  if (r >= m) {
    const Rank partner(r - m);
    const OpId fold_in = b.send(SendParams{partner, Phase::reduction, kStepFoldIn, acc}, {last});
    const SlotId in = b.add_slot();
    const OpId fold_out = b.recv(RecvParams{partner, Phase::reduction, kStepFoldOut, in});
    plan.completion = b.nop({fold_in, fold_out});
    result = in;
  } else {
    if (r < extra) {
      const SlotId in = b.add_slot();
      const OpId rin = b.recv(RecvParams{Rank(r + m), Phase::reduction, kStepFoldIn, in});
      last = b.compute(ComputeParams{acc, in, false}, {last, rin});
    }
    for (int k = 0; (1 << k) < m; ++k) {
      const Rank peer(r ^ (1 << k));
      const SlotId in = b.add_slot();
      const OpId s = b.send(SendParams{peer, Phase::reduction, static_cast<std::uint32_t>(k), acc}, {last});
      const OpId rv = b.recv(RecvParams{peer, Phase::reduction, static_cast<std::uint32_t>(k), in});
      last = b.compute(ComputeParams{acc, in, false}, {s, rv});
    }
    if (r < extra) {
      last = b.send(SendParams{Rank(r + m), Phase::reduction, kStepFoldOut, acc}, {last});
    }
    plan.completion = b.nop({last});
  }

  Schedule& s = b.schedule();
  s.send_slot = send;
  s.result_slot = result;
  s.persistent_slots = {send};
  s.entry = plan.entry;
  s.gate = plan.gate;
  s.snapshot = plan.snapshot;
  s.completion = plan.completion;
  s.persistent = true;
  plan.schedule = std::move(b).build();
  return plan;
}

AllreduceHandle::AllreduceHandle(Engine& engine, CollectiveConfig cfg) : engine_(engine), cfg_(cfg) {
  if (engine.self().id >= cfg.p) throw Error(ErrorCode::unknown_rank, "engine rank outside collective");
  plan_ids_ = build_allreduce_schedule(cfg_, engine.self());
  Schedule s = plan_ids_.schedule;
  plan_ids_.schedule = {};
  h_ = engine_.commit(std::move(s));
}

JoinStatus AllreduceHandle::join(Generation round, const ContributionPayload& payload, LatePolicy policy) {
  if (round < cfg_.round) throw Error(ErrorCode::invalid_argument, "round precedes the collective");
  if (payload.bytes.size() != cfg_.layout().bytes()) {
    throw Error(ErrorCode::length_mismatch, "contribution payload size");
  }
  const Generation gen = round - cfg_.round;
  const Generation cur = engine_.generation(h_);
  if (gen > cur) {
    throw Error(ErrorCode::invalid_argument, "round " + std::to_string(round) + " ahead of collective round " +
                                                 std::to_string(cfg_.round + cur));
  }
  if (gen < cur || engine_.snapshot_taken(h_)) {
    if (policy == LatePolicy::keep) stash(payload);
    return JoinStatus::late;
  }
  engine_.accumulate_send(h_, payload.bytes);
  if (cfg_.flavor == Flavor::majority && initiator_for_round(cfg_.seed, round, cfg_.p) != rank()) {
    engine_.release_holds(h_, gen);
  } else {
    engine_.activate_internal(h_);
  }
  return JoinStatus::on_time;
}

void AllreduceHandle::stash(const ContributionPayload& payload) { engine_.accumulate_send(h_, payload.bytes); }

void AllreduceHandle::hold_round(Generation round) {
  if (round >= cfg_.round) engine_.hold(h_, round - cfg_.round);
}

void AllreduceHandle::unhold_round(Generation round) {
  if (round >= cfg_.round) engine_.unhold(h_, round - cfg_.round);
}

bool AllreduceHandle::round_done(Generation round) const {
  auto g = engine_.recv_generation(h_);
  return g && round >= cfg_.round && *g >= round - cfg_.round;
}

CollectiveResult AllreduceHandle::latest_result() const {
  auto g = engine_.recv_generation(h_);
  return CollectiveResult::decode(cfg_, cfg_.round + g.value_or(0), engine_.recv_buffer(h_));
}

bool AllreduceHandle::initiated_current() const { return engine_.consumed(h_, plan_ids_.entry); }

void AllreduceHandle::on_complete(std::function<void(const CollectiveResult&)> fn) {
  engine_.on_complete(h_, [cfg = cfg_, fn = std::move(fn)](Generation g, const Bytes& raw) {
    fn(CollectiveResult::decode(cfg, cfg.round + g, raw));
  });
}

void AllreduceHandle::on_contribution(std::function<void(Generation, const ContributionPayload&)> fn) {
  engine_.on_snapshot(h_, [base = cfg_.round, fn = std::move(fn)](Generation g, const Bytes& raw) {
    fn(base + g, ContributionPayload{raw});
  });
}

}  // namespace pcoll
