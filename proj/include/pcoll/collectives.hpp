#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcoll/engine.hpp"
#include "pcoll/reduce.hpp"

namespace pcoll {

enum class Flavor : std::uint8_t { sync, solo, majority };

Flavor parse_flavor(const std::string& s);
const char* to_string(Flavor f);

struct CollectiveConfig {
  int p = 1;
  Flavor flavor = Flavor::sync;
  std::size_t vector_len = 1;
  ElementType element = ElementType::f64;
  /// Shared by all ranks; only majority uses it.
  std::uint64_t seed = 0;
  /// First round this collective serves.
  Generation round = 0;
  std::uint32_t collective_id = 1;

  /// Throws invalid_argument.
  void validate() const;

  std::size_t mask_words() const { return (static_cast<std::size_t>(p) + 63) / 64; }
  /// Data elements followed by the inclusion bitmask (bitwise-or reduced).
  ReductionLayout layout() const;
};

/// Data plus the contributor's inclusion bit; the zero vector with an empty
/// mask is the null contribution.
struct ContributionPayload {
  Bytes bytes;

  static ContributionPayload null(const CollectiveConfig& cfg);
  static ContributionPayload fresh(const CollectiveConfig& cfg, Rank rank, std::span<const double> data);
  static ContributionPayload fresh(const CollectiveConfig& cfg, Rank rank,
                                   std::span<const std::int64_t> data);

  std::vector<double> data(const CollectiveConfig& cfg) const;
  std::vector<std::uint64_t> mask(const CollectiveConfig& cfg) const;
  bool is_null(const CollectiveConfig& cfg) const;
};

/// The reduced round output `<U_t, s_t>` seen by every rank.
struct CollectiveResult {
  Generation round = 0;
  /// Sum of the contributions divided by P.
  std::vector<double> u;
  std::vector<std::uint64_t> included;
  int nap = 0;
  /// Reduced payload as received (sum, mask).
  Bytes raw;

  bool includes(int rank) const;

  static CollectiveResult decode(const CollectiveConfig& cfg, Generation round, const Bytes& raw);
};

/// Rank designated to trigger a majority round. Uniform over [0, p) and a pure
/// function of its arguments (splitmix64 keyed by seed and round).
Rank initiator_for_round(std::uint64_t seed, Generation round, int p);

/// Op ids of a built allreduce schedule, for tests and tooling.
struct AllreducePlan {
  Schedule schedule;
  OpId entry = 0;
  OpId gate = 0;
  OpId activated = 0;
  OpId reduction_start = 0;
  OpId snapshot = 0;
  OpId completion = 0;
  std::vector<OpId> activation_sends;  // index j targets (rank + 2^j) mod P
  std::vector<OpId> activation_recvs;  // index k listens to (rank - 2^k) mod P
};

/// Activation phase (solo/majority): a union of binomial trees. Rank r sends
/// the activation to (r + 2^j) mod P once its entry fired or it received the
/// activation on a lower dimension k < j; any activation fires `activated`.
///
/// Reduction phase: recursive doubling over the largest power of two m <= P;
/// ranks r >= m fold into r - m first and receive the final result last.
/// Every rank combines contributions in the same pairing order, so results
/// are bit-identical across ranks.
AllreducePlan build_allreduce_schedule(const CollectiveConfig& cfg, Rank self);

/// Number of activation hops from `initiator` to `target` along the binomial
/// union (popcount of the modular distance).
int activation_hops(int initiator, int target, int p);

enum class JoinStatus : std::uint8_t { on_time, late };
enum class LatePolicy : std::uint8_t { discard, keep };

/// One rank's persistent allreduce over an engine.
class AllreduceHandle {
 public:
  AllreduceHandle(Engine& engine, CollectiveConfig cfg);

  const CollectiveConfig& config() const { return cfg_; }
  Engine& engine() { return engine_; }
  ScheduleHandle handle() const { return h_; }
  Rank rank() const { return engine_.self(); }

  /// Enters `round`. If this rank's contribution for the round has not been
  /// taken yet, the payload is added to the send buffer and the round is
  /// activated according to the flavor (majority: only at the initiator).
  /// Otherwise the round went ahead without this rank: the payload is kept in
  /// the send buffer for the next round or dropped, per `policy`.
  JoinStatus join(Generation round, const ContributionPayload& payload,
                  LatePolicy policy = LatePolicy::discard);

  /// Adds to the send buffer without activating anything.
  void stash(const ContributionPayload& payload);

  /// Keeps `round` from starting its reduction here until this rank joins it
  /// or the hold is dropped.
  void hold_round(Generation round);
  void unhold_round(Generation round);

  /// Last completed round, if any.
  std::optional<Generation> completed_round() const { return engine_.recv_generation(h_); }
  bool round_done(Generation round) const;
  CollectiveResult latest_result() const;

  /// Whether this rank fired the entry of its current round.
  bool initiated_current() const;

  void on_complete(std::function<void(const CollectiveResult&)> fn);
  void on_contribution(std::function<void(Generation, const ContributionPayload&)> fn);

 private:
  Engine& engine_;
  CollectiveConfig cfg_;
  AllreducePlan plan_ids_;
  ScheduleHandle h_ = 0;
};

}  // namespace pcoll
