#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "pcoll/collectives.hpp"
#include "pcoll/sim_network.hpp"

namespace pcoll {

/// What one rank saw of one round.
struct RoundRecord {
  /// Send buffer content taken by the reduction (fresh, stale or null).
  std::optional<Bytes> contribution;
  std::optional<CollectiveResult> result;
  SimTime completed_at = -1;
};

/// One collective instance committed at every rank of a cluster.
struct CollectiveGroup {
  CollectiveConfig cfg;
  std::vector<std::unique_ptr<AllreduceHandle>> handles;
  std::map<Generation, std::vector<RoundRecord>> log;

  AllreduceHandle& at(int rank) { return *handles.at(static_cast<std::size_t>(rank)); }
  RoundRecord& record(Generation round, int rank);
  /// Whether every rank has completed `round`.
  bool round_complete(Generation round) const;
};

/// P engines over one simulated network. Each engine drains its mailbox as
/// soon as the network deposits a message, so progress is fully event driven.
class SimCluster {
 public:
  explicit SimCluster(int p, SimTime link_latency_us = 0);

  int size() const { return net_->size(); }
  SimNetwork& net() { return *net_; }
  Engine& engine(int rank) { return *engines_.at(static_cast<std::size_t>(rank)); }

  /// Commits the collective everywhere (cfg.p must equal the cluster size).
  CollectiveGroup& add_collective(const CollectiveConfig& cfg);

  void set_trace_sink(const Engine::TraceSink& sink);

 private:
  std::unique_ptr<SimNetwork> net_;
  std::vector<std::unique_ptr<Engine>> engines_;
  std::deque<CollectiveGroup> groups_;
};

struct RankRound {
  SimTime enter = 0;
  SimTime exit = 0;
  JoinStatus status = JoinStatus::on_time;
};

struct RoundOutcome {
  Generation round = 0;
  std::vector<RankRound> ranks;
  /// First rank whose join activated the round; -1 for sync.
  int initiator = -1;
};

/// Drives one round: rank i joins `round` at now + arrival[i] with payload[i].
/// On-time ranks leave when their round completes, late ranks immediately.
/// Runs the network until every rank has completed the round.
RoundOutcome run_round(SimCluster& cluster, CollectiveGroup& group, Generation round,
                       const std::vector<SimTime>& arrival, const std::vector<ContributionPayload>& payloads,
                       LatePolicy policy = LatePolicy::discard);

}  // namespace pcoll
