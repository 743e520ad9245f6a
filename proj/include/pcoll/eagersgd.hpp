#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcoll/collectives.hpp"
#include "pcoll/delay.hpp"
#include "pcoll/ledger.hpp"
#include "pcoll/models.hpp"
#include "pcoll/sim_cluster.hpp"

namespace pcoll {

// ---- learning-rate bound ----

struct LrBoundParams {
  double L = 1.0;
  double M = 1.0;
  double tau = 1.0;
  int p = 1;
  int q = 1;
  double eps = 1.0;
  double f0_minus_m = 1.0;

  /// Throws invalid_argument for non-positive values or q > p.
  void validate() const;
};

/// min(sqrt(eps) P / sqrt(12 L^2 tau M^2 (P-Q)),
///     sqrt(eps) P / sqrt(4 L tau M^2 (P-Q)),
///     eps / (12 M^2 L)); the first two are +inf when q == p.
double max_learning_rate(const LrBoundParams& params);

/// ceil(24 (f0 - m) / (alpha eps)). Throws alpha_too_large.
std::uint64_t min_iterations(const LrBoundParams& params, double alpha);

// ---- per-process state ----

/// Mirror of what this process has put into its collective send buffer.
struct GradientBuffer {
  std::vector<double> data;
  std::vector<Generation> pending_rounds;

  bool is_null() const;
  void add(std::span<const double> g, Generation round);
  void reset();
};

struct TrainState {
  int rank = 0;
  LinearModel model;
  Generation t = 0;
  GradientBuffer send_buf;
  double lr = 0.05;
  int resync_period = 10;
  /// Unset: unbounded staleness.
  std::optional<int> tau = 4;
  /// generated round -> delivered round
  std::map<Generation, Generation> staleness_ledger;
  Generation staleness_max = 0;
};

/// w <- w - lr * u (plain SGD). Throws dimension_mismatch, non_finite.
void apply_update(TrainState& st, std::span<const double> u);

/// Holds round st.t + tau so that the gradient generated now cannot be left
/// behind longer than tau rounds: the hold lasts until the gradient is taken
/// by a reduction. Returns the held round, if any.
std::optional<Generation> staleness_guard(const TrainState& st, AllreduceHandle& collective);

/// Replaces every process's weights by their average, reduced with a
/// synchronous allreduce (same pairing order everywhere).
void resync_models(std::vector<TrainState>& states);

/// 16-byte header ("PCKP", version u32, dim u64) then dim f64 values.
void save_checkpoint(const std::string& path, std::span<const double> w);
std::vector<double> load_checkpoint(const std::string& path);

// ---- simulated training ----

struct TrainConfig {
  int p = 8;
  Flavor flavor = Flavor::solo;
  std::size_t dim = 64;
  std::size_t n = 4096;
  double sigma = 0.1;
  bool bias = false;
  std::uint64_t data_seed = 1;
  /// Per-process minibatch.
  std::size_t batch = 32;
  int epochs = 48;
  /// Overrides epochs when set.
  std::optional<std::size_t> rounds;
  double alpha = 0.05;
  /// Epochs between model synchronizations; 0 disables (the final one stays).
  int resync_period = 10;
  std::optional<int> tau = 4;
  /// Virtual time per gradient computation, before injected delay.
  double compute_ms = 400.0;
  DelayModel delay;
  std::uint64_t seed = 7;
  SimTime link_latency_us = 0;
  /// Keep weights and gradients of every step for offline analysis.
  bool keep_trace = false;
  /// Per-(round, rank) metric records.
  bool keep_metrics = false;

  /// Throws config_invalid.
  void validate() const;
  std::size_t steps_per_epoch() const;
  std::size_t total_rounds() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;       // mean minibatch loss over the epoch's steps
  double validation_mse = 0.0;   // mean over processes at the epoch boundary
  double sim_time_ms = 0.0;      // when the last process crossed the boundary
};

/// One line of the metrics stream.
struct MetricRecord {
  Generation round = 0;
  int epoch = 0;
  int rank = 0;
  double loss = 0.0;
  int nap = 0;
  Generation staleness_max = 0;
  double sim_time_ms = 0.0;
};

std::string to_json_line(const MetricRecord& m);

/// One local step of one process.
struct StepRecord {
  int rank = 0;
  Generation round = 0;          // local round the gradient was computed in
  Generation applied_round = 0;  // collective round whose result was applied
  bool late = false;
  std::vector<double> w;         // weights the gradient was computed at
  std::vector<double> grad;
};

struct RoundSummary {
  Generation round = 0;
  int nap = 0;
  std::vector<std::uint64_t> included;
  std::vector<double> u;  // with keep_trace only
};

struct TrainReport {
  TrainConfig config;
  std::vector<EpochMetrics> epochs;
  std::vector<MetricRecord> metrics;
  std::vector<StepRecord> steps;
  std::vector<RoundSummary> rounds;
  DeliveryLedger ledger;
  /// Per-(round, rank) contributions and results of the main collective,
  /// with keep_trace only.
  CollectiveConfig collective;
  std::map<Generation, std::vector<RoundRecord>> collective_log;
  /// Per-process weights right before the final synchronization.
  std::vector<std::vector<double>> weights_before_sync;
  std::vector<double> final_w;
  double final_validation_mse = 0.0;
  double final_train_mse = 0.0;
  double total_time_ms = 0.0;
  double steps_per_s = 0.0;
  std::size_t rounds_run = 0;
  std::size_t skipped_rounds = 0;
  std::size_t late_joins = 0;
  int resyncs = 0;
};

/// Runs eager-SGD (or synchronous SGD with Flavor::sync) on the simulated
/// network. Throws divergence when a loss or update becomes non-finite.
TrainReport run_eager_sgd(const TrainConfig& cfg);

}  // namespace pcoll
