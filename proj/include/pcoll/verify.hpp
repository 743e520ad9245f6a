#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcoll/eagersgd.hpp"
#include "pcoll/ledger.hpp"
#include "pcoll/sim_cluster.hpp"

namespace pcoll {

// ---- contract checker ----

struct CollectiveTrace {
  CollectiveConfig cfg;
  std::map<Generation, std::vector<RoundRecord>> log;
  /// Rounds [first_round, end_round) must have returned at every rank.
  Generation first_round = 0;
  Generation end_round = 0;
  std::optional<DeliveryLedger> ledger;
  /// Unset: ages are not bounded.
  std::optional<int> tau;
  /// Gradients generated at or after this round may be undelivered.
  Generation pending_from = 0;

  static CollectiveTrace of(const CollectiveGroup& g, Generation first, Generation end);
  /// Main collective of a keep_trace training run.
  static CollectiveTrace of(const TrainReport& rep);
};

enum class ViolationKind {
  liveness,         // a rank never returned from a round
  disagreement,     // ranks returned different results
  subset_sum,       // P * u differs from the flagged contributions
  nap,              // nap < 1 or inconsistent with the mask
  staleness,        // a gradient waited longer than tau rounds
  double_delivery,  // a gradient was reduced more than once
  lost_gradient,    // a gradient was never reduced
};

const char* to_string(ViolationKind k);

struct Violation {
  ViolationKind kind = ViolationKind::liveness;
  Generation round = 0;
  int rank = -1;
  std::string detail;
};

struct ContractReport {
  std::size_t rounds_checked = 0;
  std::size_t gradients_checked = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind k) const;
  std::string to_json() const;
};

/// Per round: liveness, identical results, P*u equal to the sum of the
/// flagged contributions (relative `tol` for f64), nap >= 1. With a ledger:
/// single delivery, ages within tau, nothing lost before pending_from.
ContractReport check_round_contract(const CollectiveTrace& trace, double tol = 1e-9);

/// Ledger part of the check on its own.
std::vector<Violation> audit_ledger(const DeliveryLedger& ledger, std::optional<int> tau, Generation pending_from);

// ---- drift against the averaged iterate ----

struct ShadowReport {
  /// Per round: mean over ranks that computed in that round of |Lambda_t - w_t^i|^2.
  std::vector<double> drift;
  double mean_drift = 0.0;
  double max_drift = 0.0;
  /// Mean |G|^2 over every gradient.
  double m2_hat = 0.0;
  /// Smallest nap seen.
  int q_hat = 0;
  double tau = 1.0;
  /// alpha^2 tau M^2 (P - Q) / P^2
  double bound = 0.0;

  bool within(double slack) const { return mean_drift <= bound * (1.0 + slack); }
};

/// Rebuilds Lambda_{t+1} = Lambda_t - (alpha / P) sum_i G_t^i from a
/// keep_trace run without intermediate resyncs. Throws incomplete_trace.
ShadowReport track_shadow(const TrainReport& rep);

// ---- exhaustive interleavings ----

struct InterleavingCase {
  int p = 2;
  Flavor flavor = Flavor::solo;
  /// Ranks that activate the round themselves; the rest only react.
  std::vector<bool> internal;
  std::vector<std::vector<double>> contributions;
  /// Internal activations all happen before any delivery; only message
  /// orders are explored.
  bool joins_first = false;
  std::size_t max_paths = 200000;
};

struct InterleavingReport {
  std::size_t paths = 0;
  std::size_t max_depth = 0;
  std::size_t distinct_results = 0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

/// Replays every order of internal activations and message deliveries.
/// In each: every rank completes the round exactly once, no op fires twice,
/// all ranks agree, and the result is the sum of the contributions.
/// Throws state_space_too_large.
InterleavingReport explore_interleavings(const InterleavingCase& c);

}  // namespace pcoll
