#include "pcoll/sim_cluster.hpp"

namespace pcoll {

RoundRecord& CollectiveGroup::record(Generation round, int rank) {
  auto& v = log[round];
  if (v.empty()) v.resize(static_cast<std::size_t>(cfg.p));
  return v.at(static_cast<std::size_t>(rank));
}

bool CollectiveGroup::round_complete(Generation round) const {
  for (const auto& h : handles) {
    if (!h->round_done(round)) return false;
  }
  return true;
}

SimCluster::SimCluster(int p, SimTime link_latency_us)
    : net_(std::make_unique<SimNetwork>(p, link_latency_us)) {
  for (int r = 0; r < p; ++r) {
    auto e = std::make_unique<Engine>(Rank(r), *net_);
    Engine* raw = e.get();
    net_->mailbox(Rank(r)).set_notify([raw] { raw->drain_mailbox(); });
    engines_.push_back(std::move(e));
  }
}

CollectiveGroup& SimCluster::add_collective(const CollectiveConfig& cfg) {
  if (cfg.p != size()) {
    throw Error(ErrorCode::config_invalid, "collective for " + std::to_string(cfg.p) + " ranks on a cluster of " +
                                               std::to_string(size()));
  }
  auto& g = groups_.emplace_back();
  g.cfg = cfg;
  for (int r = 0; r < size(); ++r) {
    auto h = std::make_unique<AllreduceHandle>(engine(r), cfg);
    SimNetwork* net = net_.get();
    CollectiveGroup* gp = &g;
    h->on_contribution([gp, r](Generation round, const ContributionPayload& c) {
      gp->record(round, r).contribution = c.bytes;
    });
    h->on_complete([gp, net, r](const CollectiveResult& res) {
      auto& rec = gp->record(res.round, r);
      rec.result = res;
      rec.completed_at = net->now();
    });
    g.handles.push_back(std::move(h));
  }
  return g;
}

void SimCluster::set_trace_sink(const Engine::TraceSink& sink) {
  for (auto& e : engines_) e->set_trace_sink(sink);
}

RoundOutcome run_round(SimCluster& cluster, CollectiveGroup& group, Generation round,
                       const std::vector<SimTime>& arrival, const std::vector<ContributionPayload>& payloads,
                       LatePolicy policy) {
  const int p = cluster.size();
  if (arrival.size() != static_cast<std::size_t>(p) || payloads.size() != static_cast<std::size_t>(p)) {
    throw Error(ErrorCode::invalid_argument, "one arrival and payload per rank required");
  }
  RoundOutcome out;
  out.round = round;
  out.ranks.resize(static_cast<std::size_t>(p));
  if (group.cfg.flavor == Flavor::majority) out.initiator = initiator_for_round(group.cfg.seed, round, p).id;

  SimNetwork& net = cluster.net();
  const SimTime start = net.now();
  std::vector<bool> joined(static_cast<std::size_t>(p), false);
  for (int r = 0; r < p; ++r) {
    const auto i = static_cast<std::size_t>(r);
    if (arrival[i] < 0) throw Error(ErrorCode::invalid_argument, "negative arrival offset");
    net.schedule_at(start + arrival[i], Rank(r), [&, r, i] {
      out.ranks[i].enter = net.now();
      out.ranks[i].status = group.at(r).join(round, payloads[i], policy);
      joined[i] = true;
      if (out.ranks[i].status == JoinStatus::late) {
        out.ranks[i].exit = net.now();
      } else if (group.cfg.flavor == Flavor::solo && out.initiator < 0) {
        out.initiator = r;
      }
    });
  }
  auto done = [&] {
    for (bool j : joined) {
      if (!j) return false;
    }
    return group.round_complete(round);
  };
  if (!net.run_until(done)) {
    throw Error(ErrorCode::invalid_argument, "round " + std::to_string(round) + " did not complete");
  }
  for (int r = 0; r < p; ++r) {
    auto& rr = out.ranks[static_cast<std::size_t>(r)];
    if (rr.status == JoinStatus::on_time) rr.exit = group.record(round, r).completed_at;
  }
  return out;
}

}  // namespace pcoll
