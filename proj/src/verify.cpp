#include "pcoll/verify.hpp"

#include <bit>
#include <cmath>
#include <memory>
#include <set>

#include "json.hpp"

namespace pcoll {

const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::liveness: return "liveness";
    case ViolationKind::disagreement: return "disagreement";
    case ViolationKind::subset_sum: return "subset_sum";
    case ViolationKind::nap: return "nap";
    case ViolationKind::staleness: return "staleness";
    case ViolationKind::double_delivery: return "double_delivery";
    case ViolationKind::lost_gradient: return "lost_gradient";
  }
  return "?";
}

CollectiveTrace CollectiveTrace::of(const CollectiveGroup& g, Generation first, Generation end) {
  CollectiveTrace t;
  t.cfg = g.cfg;
  t.log = g.log;
  t.first_round = first;
  t.end_round = end;
  return t;
}

CollectiveTrace CollectiveTrace::of(const TrainReport& rep) {
  if (rep.collective_log.empty()) throw Error(ErrorCode::incomplete_trace, "run did not keep a trace");
  CollectiveTrace t;
  t.cfg = rep.collective;
  t.log = rep.collective_log;
  t.first_round = 0;
  t.end_round = rep.rounds_run;
  t.ledger = rep.ledger;
  t.tau = rep.config.tau;
  // a straggler's last gradients can miss the final round; with the guard
  // that straggler is at most tau rounds behind
  t.pending_from = rep.config.tau && rep.rounds_run >= static_cast<std::size_t>(*rep.config.tau)
                       ? rep.rounds_run - static_cast<Generation>(*rep.config.tau)
                       : 0;
  if (!rep.config.tau) t.pending_from = rep.rounds_run;
  return t;
}

std::size_t ContractReport::count(ViolationKind k) const {
  std::size_t n = 0;
  for (const auto& v : violations) n += v.kind == k ? 1 : 0;
  return n;
}

std::string ContractReport::to_json() const {
  nlohmann::json j;
  j["rounds_checked"] = rounds_checked;
  j["gradients_checked"] = gradients_checked;
  j["ok"] = ok();
  auto& vs = j["violations"] = nlohmann::json::array();
  for (const auto& v : violations) {
    vs.push_back({{"kind", to_string(v.kind)}, {"round", v.round}, {"rank", v.rank}, {"detail", v.detail}});
  }
  return j.dump();
}

std::vector<Violation> audit_ledger(const DeliveryLedger& ledger, std::optional<int> tau, Generation pending_from) {
  std::vector<Violation> out;
  for (const auto& g : ledger.records()) {
    if (g.deliveries > 1) {
      out.push_back({ViolationKind::double_delivery, g.generated, g.rank,
                     "reduced " + std::to_string(g.deliveries) + " times"});
    }
    if (!g.delivered) {
      if (g.generated < pending_from) out.push_back({ViolationKind::lost_gradient, g.generated, g.rank, "never reduced"});
      continue;
    }
    if (*g.delivered < g.generated) {
      out.push_back({ViolationKind::staleness, g.generated, g.rank, "delivered before it was generated"});
    } else if (tau && *g.delivered - g.generated > static_cast<Generation>(*tau)) {
      out.push_back({ViolationKind::staleness, g.generated, g.rank,
                     "age " + std::to_string(*g.delivered - g.generated) + " > " + std::to_string(*tau)});
    }
  }
  return out;
}

ContractReport check_round_contract(const CollectiveTrace& trace, double tol) {
  ContractReport rep;
  const auto& cfg = trace.cfg;
  const int p = cfg.p;
  for (Generation round = trace.first_round; round < trace.end_round; ++round) {
    ++rep.rounds_checked;
    auto it = trace.log.find(round);
    if (it == trace.log.end()) {
      rep.violations.push_back({ViolationKind::liveness, round, -1, "no rank returned"});
      continue;
    }
    const auto& recs = it->second;
    const CollectiveResult* ref = nullptr;
    int ref_rank = -1;
    for (int r = 0; r < p; ++r) {
      const auto& rec = recs.at(static_cast<std::size_t>(r));
      if (!rec.result) {
        rep.violations.push_back({ViolationKind::liveness, round, r, "did not return"});
        continue;
      }
      if (!ref) {
        ref = &*rec.result;
        ref_rank = r;
      } else if (rec.result->raw != ref->raw || rec.result->u != ref->u || rec.result->included != ref->included ||
                 rec.result->nap != ref->nap) {
        rep.violations.push_back(
            {ViolationKind::disagreement, round, r, "result differs from rank " + std::to_string(ref_rank)});
      }
    }
    if (!ref) continue;

    int bits = 0;
    for (auto w : ref->included) bits += std::popcount(w);
    if (ref->nap < 1 || ref->nap != bits) {
      rep.violations.push_back({ViolationKind::nap, round, ref_rank,
                                "nap " + std::to_string(ref->nap) + ", mask bits " + std::to_string(bits)});
    }

    // oracle: the flagged contributions, summed in rank order
    std::vector<double> sum(cfg.vector_len, 0.0), mag(cfg.vector_len, 0.0);
    bool complete = true;
    for (int r = 0; r < p && complete; ++r) {
      const auto& c = recs.at(static_cast<std::size_t>(r)).contribution;
      if (!c) {
        rep.violations.push_back({ViolationKind::subset_sum, round, r, "contribution not recorded"});
        complete = false;
        break;
      }
      const ContributionPayload pl{*c};
      const auto data = pl.data(cfg);
      const bool flagged = ref->includes(r);
      const bool own_bit = [&] {
        const auto m = pl.mask(cfg);
        const auto w = static_cast<std::size_t>(r) / 64;
        return w < m.size() && ((m[w] >> (r % 64)) & 1u);
      }();
      if (flagged != own_bit) {
        rep.violations.push_back({ViolationKind::subset_sum, round, r, "mask disagrees with the contribution"});
      }
      if (!flagged) {
        for (double v : data) {
          if (v != 0.0) {
            rep.violations.push_back({ViolationKind::subset_sum, round, r, "unflagged rank contributed data"});
            break;
          }
        }
        continue;
      }
      for (std::size_t k = 0; k < data.size(); ++k) {
        sum[k] += data[k];
        mag[k] += std::abs(data[k]);
      }
    }
    if (!complete) continue;
    const auto reduced = ContributionPayload{ref->raw}.data(cfg);
    for (std::size_t k = 0; k < sum.size(); ++k) {
      const double err = std::abs(reduced[k] - sum[k]);
      const double allowed = cfg.element == ElementType::i64 ? 0.0 : tol * std::max(mag[k], 1e-300);
      const double scaled = std::abs(ref->u[k] * p - sum[k]);
      if (err > allowed || scaled > allowed + 4 * std::numeric_limits<double>::epsilon() * mag[k]) {
        rep.violations.push_back({ViolationKind::subset_sum, round, ref_rank,
                                  "element " + std::to_string(k) + ": reduced " + std::to_string(reduced[k]) +
                                      ", flagged sum " + std::to_string(sum[k])});
        break;
      }
    }
  }
  if (trace.ledger) {
    rep.gradients_checked = trace.ledger->size();
    auto v = audit_ledger(*trace.ledger, trace.tau, trace.pending_from);
    rep.violations.insert(rep.violations.end(), v.begin(), v.end());
  }
  return rep;
}

ShadowReport track_shadow(const TrainReport& rep) {
  const auto& cfg = rep.config;
  if (!cfg.keep_trace || rep.steps.empty()) throw Error(ErrorCode::incomplete_trace, "run did not keep steps");
  if (rep.steps.size() != rep.ledger.size()) throw Error(ErrorCode::incomplete_trace, "steps and ledger disagree");
  if (cfg.resync_period > 0 && rep.resyncs > 1) {
    throw Error(ErrorCode::incomplete_trace, "intermediate model synchronizations are not tracked");
  }
  const Generation total = rep.rounds_run;
  std::map<Generation, std::vector<const StepRecord*>> by_round;
  for (const auto& s : rep.steps) by_round[s.round].push_back(&s);
  std::map<Generation, const RoundSummary*> summary;
  for (const auto& r : rep.rounds) summary[r.round] = &r;

  // rounds that reduced exactly the gradients generated in them
  std::map<Generation, int> generated_at, delivered_same;
  std::set<Generation> foreign;
  for (const auto& g : rep.ledger.records()) {
    ++generated_at[g.generated];
    if (g.delivered) {
      if (*g.delivered == g.generated) {
        ++delivered_same[g.generated];
      } else {
        foreign.insert(*g.delivered);
      }
    }
  }

  const std::size_t dim = rep.final_w.size();
  std::vector<double> lambda(dim, 0.0);
  ShadowReport out;
  out.drift.assign(total, 0.0);
  double sum_drift = 0.0, sum_g2 = 0.0;
  std::size_t samples = 0;
  for (Generation t = 0; t < total; ++t) {
    auto it = by_round.find(t);
    if (it == by_round.end()) continue;
    double round_sum = 0.0;
    std::vector<double> gsum(dim, 0.0);
    for (const StepRecord* s : it->second) {
      if (s->w.size() != dim || s->grad.size() != dim) throw Error(ErrorCode::incomplete_trace, "step without data");
      double d = 0.0, g2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        d += (lambda[k] - s->w[k]) * (lambda[k] - s->w[k]);
        g2 += s->grad[k] * s->grad[k];
        gsum[k] += s->grad[k];
      }
      round_sum += d;
      sum_g2 += g2;
      ++samples;
    }
    out.drift[t] = round_sum / static_cast<double>(it->second.size());
    sum_drift += round_sum;
    out.max_drift = std::max(out.max_drift, out.drift[t]);

    auto su = summary.find(t);
    const bool exact = su != summary.end() && su->second->u.size() == dim && !foreign.count(t) &&
                       delivered_same[t] == generated_at[t];
    for (std::size_t k = 0; k < dim; ++k) {
      // same arithmetic as the ranks when the round reduced exactly these gradients
      const double u = exact ? su->second->u[k] : gsum[k] / cfg.p;
      lambda[k] -= cfg.alpha * u;
    }
  }
  out.mean_drift = samples ? sum_drift / static_cast<double>(samples) : 0.0;
  out.m2_hat = samples ? sum_g2 / static_cast<double>(samples) : 0.0;
  out.q_hat = cfg.p;
  for (const auto& r : rep.rounds) out.q_hat = std::min(out.q_hat, r.nap);
  out.tau = cfg.tau ? *cfg.tau : std::max<double>(1.0, static_cast<double>(rep.ledger.max_age()));
  const double P = cfg.p;
  out.bound = cfg.alpha * cfg.alpha * out.tau * out.m2_hat * (P - out.q_hat) / (P * P);
  return out;
}

namespace {

/// Holds sends until the explorer chooses to deliver them.
class ManualTransport final : public Transport {
 public:
  explicit ManualTransport(int p) {
    for (int i = 0; i < p; ++i) boxes_.push_back(std::make_unique<Mailbox>());
  }
  int size() const override { return static_cast<int>(boxes_.size()); }
  void send(Message msg) override {
    if (msg.dst.id < 0 || msg.dst.id >= size()) throw Error(ErrorCode::unknown_rank, "manual transport");
    inflight.push_back(std::move(msg));
  }
  Mailbox& mailbox(Rank r) override { return *boxes_.at(static_cast<std::size_t>(r.id)); }
  void close() override {}
  SimTime now_us() const override { return 0; }

  std::vector<Message> inflight;

 private:
  std::vector<std::unique_ptr<Mailbox>> boxes_;
};

struct World {
  CollectiveConfig cfg;
  ManualTransport net;
  std::vector<std::unique_ptr<Engine>> engines;
  std::vector<std::unique_ptr<AllreduceHandle>> handles;
  std::vector<bool> joined;
  std::vector<int> completions;
  std::vector<int> late_completions;
  std::vector<std::optional<Bytes>> result;
  std::vector<std::optional<Bytes>> snapshot;
  std::map<std::tuple<int, OpId, Generation>, int> fires;
  std::vector<std::string> errors;

  World(const InterleavingCase& c) : net(c.p) {
    cfg.p = c.p;
    cfg.flavor = c.flavor;
    cfg.vector_len = c.contributions.at(0).size();
    const auto n = static_cast<std::size_t>(c.p);
    joined.assign(n, false);
    completions.assign(n, 0);
    late_completions.assign(n, 0);
    result.resize(n);
    snapshot.resize(n);
    for (int r = 0; r < c.p; ++r) {
      auto e = std::make_unique<Engine>(Rank(r), net);
      e->set_trace_sink([this](const TraceEvent& ev) {
        if (ev.action == TraceEvent::Action::fire && ++fires[{ev.rank, ev.op_id, ev.generation}] == 2) {
          errors.push_back("rank " + std::to_string(ev.rank) + " op " + std::to_string(ev.op_id) + " fired twice");
        }
      });
      auto h = std::make_unique<AllreduceHandle>(*e, cfg);
      const auto i = static_cast<std::size_t>(r);
      h->on_complete([this, i](const CollectiveResult& res) {
        if (res.round == 0) {
          ++completions[i];
          result[i] = res.raw;
        } else {
          ++late_completions[i];
        }
      });
      h->on_contribution([this, i](Generation g, const ContributionPayload& pl) {
        if (g == 0) snapshot[i] = pl.bytes;
      });
      if (!c.internal.at(i)) h->stash(ContributionPayload::fresh(cfg, Rank(r), c.contributions[i]));
      engines.push_back(std::move(e));
      handles.push_back(std::move(h));
    }
  }

  // actions: [0, p) joins rank a; p + k delivers in-flight message k
  std::vector<int> actions(const InterleavingCase& c) const {
    std::vector<int> out;
    for (int r = 0; r < c.p; ++r) {
      if (c.internal[static_cast<std::size_t>(r)] && !joined[static_cast<std::size_t>(r)]) out.push_back(r);
    }
    if (c.joins_first && !out.empty()) return {out.front()};
    for (std::size_t k = 0; k < net.inflight.size(); ++k) out.push_back(c.p + static_cast<int>(k));
    return out;
  }

  void apply(const InterleavingCase& c, int a) {
    if (a < c.p) {
      const auto i = static_cast<std::size_t>(a);
      joined[i] = true;
      handles[i]->join(0, ContributionPayload::fresh(cfg, Rank(a), c.contributions[i]));
      return;
    }
    const auto k = static_cast<std::size_t>(a - c.p);
    Message m = std::move(net.inflight.at(k));
    net.inflight.erase(net.inflight.begin() + static_cast<std::ptrdiff_t>(k));
    engines.at(static_cast<std::size_t>(m.dst.id))->deliver(std::move(m));
  }
};

void check_leaf(const InterleavingCase& c, World& w, std::set<Bytes>& results, std::vector<std::string>& failures,
                const std::vector<int>& path) {
  auto describe = [&] {
    std::string s = " [path";
    for (int a : path) s += a < c.p ? " join" + std::to_string(a) : " msg" + std::to_string(a - c.p);
    return s + "]";
  };
  for (const auto& e : w.errors) failures.push_back(e + describe());
  bool any_internal = false;
  for (bool b : c.internal) any_internal = any_internal || b;
  if (!any_internal) return;

  std::vector<double> expect(w.cfg.vector_len, 0.0);
  for (int r = 0; r < c.p; ++r) {
    const auto i = static_cast<std::size_t>(r);
    if (w.completions[i] != 1) {
      failures.push_back("rank " + std::to_string(r) + " completed " + std::to_string(w.completions[i]) + " times" +
                         describe());
    }
    if (w.late_completions[i] != 0) failures.push_back("rank " + std::to_string(r) + " ran a second round" + describe());
    if (w.snapshot[i]) {
      const auto d = ContributionPayload{*w.snapshot[i]}.data(w.cfg);
      for (std::size_t k = 0; k < d.size(); ++k) expect[k] += d[k];
    }
  }
  if (!w.result[0]) return;
  for (int r = 1; r < c.p; ++r) {
    if (w.result[static_cast<std::size_t>(r)] != w.result[0]) {
      failures.push_back("ranks 0 and " + std::to_string(r) + " disagree" + describe());
    }
  }
  if (ContributionPayload{*w.result[0]}.data(w.cfg) != expect) {
    failures.push_back("result is not the sum of the contributions" + describe());
  }
  results.insert(*w.result[0]);
}

}  // namespace

InterleavingReport explore_interleavings(const InterleavingCase& c) {
  if (c.p < 1 || c.p > 4) throw Error(ErrorCode::state_space_too_large, "exhaustive exploration needs p <= 4");
  if (c.internal.size() != static_cast<std::size_t>(c.p) || c.contributions.size() != static_cast<std::size_t>(c.p)) {
    throw Error(ErrorCode::invalid_argument, "one activation flag and contribution per rank required");
  }
  InterleavingReport rep;
  std::set<Bytes> results;
  // depth-first over action sequences; every node is rebuilt by replay since
  // engines cannot be copied
  std::vector<std::vector<int>> stack{{}};
  while (!stack.empty()) {
    std::vector<int> path = std::move(stack.back());
    stack.pop_back();
    World w(c);
    for (int a : path) w.apply(c, a);
    const auto next = w.actions(c);
    if (next.empty()) {
      if (++rep.paths > c.max_paths) {
        throw Error(ErrorCode::state_space_too_large, "more than " + std::to_string(c.max_paths) + " interleavings");
      }
      rep.max_depth = std::max(rep.max_depth, path.size());
      check_leaf(c, w, results, rep.failures, path);
      continue;
    }
    for (auto it = next.rbegin(); it != next.rend(); ++it) {
      auto child = path;
      child.push_back(*it);
      stack.push_back(std::move(child));
    }
  }
  rep.distinct_results = results.size();
  return rep;
}

}  // namespace pcoll
