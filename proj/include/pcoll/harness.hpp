#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcoll/collectives.hpp"
#include "pcoll/delay.hpp"
#include "pcoll/eagersgd.hpp"
#include "pcoll/socket_cluster.hpp"

namespace pcoll {

enum class RunMode { bench, train };
enum class TransportKind { sim, socket };

TransportKind parse_transport(const std::string& s);
const char* to_string(TransportKind t);

struct RunConfig {
  RunMode mode = RunMode::bench;
  TransportKind transport = TransportKind::sim;
  /// Socket mode only.
  ProgressMode progress = ProgressMode::auxiliary;
  /// Bench runs every listed flavor; training uses the first.
  std::vector<Flavor> flavors{Flavor::sync, Flavor::solo, Flavor::majority};
  int p = 32;
  std::size_t rounds = 64;
  SimTime link_latency_us = 0;
  DelayModel delay{DelayKind::linear_skew, 1.0, 0.0, 1, 0, std::nullopt};
  std::size_t vector_len = 1;
  std::uint64_t seed = 7;
  /// Model and optimizer settings; p, delay, seed, latency and flavor are
  /// taken from the fields above.
  TrainConfig train;
  std::string output;

  /// Throws config_invalid.
  void validate() const;
  TrainConfig training_config() const;
};

/// One `key = value` setting; throws config_invalid for unknown keys or
/// malformed values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Documented key-value format: one `key = value` per line, `#` starts a
/// comment, blank lines are ignored.
void parse_config(std::istream& in, RunConfig& cfg);
void load_config(const std::string& path, RunConfig& cfg);

/// Every accepted key, in the order they are documented.
std::vector<std::string> config_keys();

// ---- microbenchmark ----

struct BenchRecord {
  Flavor flavor = Flavor::sync;
  Generation round = 0;
  int rank = 0;
  /// Virtual microseconds in simulated mode, wall microseconds with sockets.
  SimTime latency_us = 0;
  int nap = 0;
  int initiator = -1;
};

/// Per round, every rank idles its injected delay, joins, and records how
/// long it stayed inside the collective. Rounds are separated by a barrier.
std::vector<BenchRecord> bench_collectives(const RunConfig& cfg);

struct FlavorSummary {
  Flavor flavor = Flavor::sync;
  std::size_t records = 0;
  double mean_latency_ms = 0.0;
  double stddev_latency_ms = 0.0;
  double mean_nap = 0.0;
};

struct BenchSummary {
  std::vector<FlavorSummary> flavors;

  const FlavorSummary* find(Flavor f) const;
  /// mean latency of `slow` over mean latency of `fast`; +inf when fast is 0.
  double speedup(Flavor slow, Flavor fast) const;
};

/// Throws empty_input.
BenchSummary summarize(const std::vector<BenchRecord>& records);

inline constexpr int kCsvVersion = 1;

std::string bench_csv(const std::vector<BenchRecord>& records);
std::string bench_json_lines(const std::vector<BenchRecord>& records);
/// Inverse of bench_csv. Throws io_error on malformed input.
std::vector<BenchRecord> parse_bench_csv(const std::string& text);
std::string summary_csv(const BenchSummary& s);
std::string summary_json(const BenchSummary& s);
std::string summary_table(const BenchSummary& s);

// ---- training ----

/// Throws divergence.
TrainReport run_training(const RunConfig& cfg);

std::string epochs_csv(const TrainReport& rep);
std::string metrics_json_lines(const TrainReport& rep);
std::string training_table(const TrainReport& rep);

// ---- invariant suites ----

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  std::size_t violations = 0;
  std::string detail;
};

/// Randomized skew configurations over P in {2, 4, 8, 16}, every flavor,
/// guard enabled; each run goes through check_round_contract.
SuiteResult contract_suite(std::size_t configs, std::uint64_t seed);

/// Every activation and message order of a P=2 solo allreduce.
SuiteResult interleaving_suite();

/// tau = 1, one rank forced one round behind, `rounds` rounds: each gradient
/// reduced exactly once.
SuiteResult conservation_suite(std::size_t rounds = 100);

struct DriftResult {
  double alpha = 0.0;
  double mean_drift = 0.0;
  double bound = 0.0;
  double m2_hat = 0.0;
  int q_hat = 0;
};

/// P=4, tau=1, paired runs at alpha and alpha/2 on noise-dominated data.
/// Passes when both runs stay within the bound plus `slack` and the ratio of
/// drifts lies in [3, 5].
SuiteResult drift_suite(double alpha = 0.01, double slack = 0.5, std::vector<DriftResult>* out = nullptr);

}  // namespace pcoll
