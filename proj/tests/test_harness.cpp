#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "pcoll/harness.hpp"

using namespace pcoll;

namespace {

RunConfig bench_cfg(int p, std::size_t rounds, std::vector<Flavor> flavors) {
  RunConfig c;
  c.p = p;
  c.rounds = rounds;
  c.flavors = std::move(flavors);
  c.delay.kind = DelayKind::linear_skew;
  c.delay.unit_ms = 1.0;
  return c;
}

double mean_latency_ms(const std::vector<BenchRecord>& recs, Flavor f) {
  double s = 0;
  int n = 0;
  for (const auto& r : recs) {
    if (r.flavor == f) {
      s += static_cast<double>(r.latency_us) / 1000.0;
      ++n;
    }
  }
  return s / n;
}

}  // namespace

TEST(Config, ParsesKeyValueFile) {
  std::istringstream in(R"(# bench setup
p = 16
flavor = solo, majority
delay.kind = random_subset   # trailing comment
delay.k = 3
delay.unit_ms = 2.5
train.tau = inf
train.alpha = 0.01

seed = 99
)");
  RunConfig c;
  parse_config(in, c);
  EXPECT_EQ(c.p, 16);
  EXPECT_EQ(c.flavors, (std::vector<Flavor>{Flavor::solo, Flavor::majority}));
  EXPECT_EQ(c.delay.kind, DelayKind::random_subset);
  EXPECT_EQ(c.delay.k, 3);
  EXPECT_DOUBLE_EQ(c.delay.unit_ms, 2.5);
  EXPECT_FALSE(c.train.tau.has_value());
  EXPECT_DOUBLE_EQ(c.train.alpha, 0.01);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_setting(c, "nonsense", "1"), Error);
  EXPECT_THROW(apply_setting(c, "p", "four"), Error);
  EXPECT_THROW(apply_setting(c, "p", "4x"), Error);
  EXPECT_THROW(apply_setting(c, "flavor", "quorum"), Error);
  EXPECT_THROW(apply_setting(c, "train.tau", "0"), Error);
  EXPECT_THROW(apply_setting(c, "seed", "-3"), Error);
  std::istringstream in("p 4\n");
  EXPECT_THROW(parse_config(in, c), Error);
  c.p = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, EveryDocumentedKeyIsAccepted) {
  const std::map<std::string, std::string> sample{
      {"mode", "train"},          {"transport", "sim"},      {"progress", "caller"},   {"p", "8"},
      {"flavor", "all"},          {"rounds", "10"},          {"link_latency_us", "5"}, {"vector_len", "4"},
      {"seed", "3"},              {"output", "out"},         {"delay.kind", "constant"}, {"delay.unit_ms", "2"},
      {"delay.max_ms", "4"},      {"delay.k", "2"},          {"delay.seed", "1"},      {"delay.rank", "3"},
      {"train.dim", "8"},         {"train.n", "100"},        {"train.sigma", "0.5"},   {"train.bias", "true"},
      {"train.data_seed", "2"},   {"train.batch", "4"},      {"train.epochs", "2"},    {"train.rounds", "none"},
      {"train.alpha", "0.1"},     {"train.resync_period", "0"}, {"train.tau", "2"},    {"train.compute_ms", "1"}};
  RunConfig c;
  for (const auto& k : config_keys()) {
    ASSERT_TRUE(sample.count(k)) << k;
    EXPECT_NO_THROW(apply_setting(c, k, sample.at(k))) << k;
  }
  EXPECT_EQ(sample.size(), config_keys().size());
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.training_config().p, 8);
  EXPECT_EQ(c.training_config().flavor, Flavor::sync);
}

TEST(Bench, SyncWaitsForTheLastArrival) {
  auto recs = bench_collectives(bench_cfg(4, 1, {Flavor::sync}));
  ASSERT_EQ(recs.size(), 4u);
  // rank i arrives at (i+1) ms and leaves when rank 3 arrives at 4 ms
  const SimTime expect[] = {3000, 2000, 1000, 0};
  for (const auto& r : recs) {
    EXPECT_EQ(r.latency_us, expect[r.rank]);
    EXPECT_EQ(r.nap, 4);
  }
  EXPECT_DOUBLE_EQ(mean_latency_ms(recs, Flavor::sync), 1.5);
}

TEST(Bench, SoloDoesNotWait) {
  auto recs = bench_collectives(bench_cfg(4, 3, {Flavor::solo}));
  for (const auto& r : recs) {
    EXPECT_EQ(r.latency_us, 0);
    EXPECT_EQ(r.nap, 1);
    EXPECT_EQ(r.initiator, 0);
  }
}

TEST(Bench, FullScaleNapAndOrdering) {
  auto recs = bench_collectives(bench_cfg(32, 64, {Flavor::sync, Flavor::solo, Flavor::majority}));
  auto s = summarize(recs);
  EXPECT_DOUBLE_EQ(s.find(Flavor::sync)->mean_nap, 32.0);
  EXPECT_GE(s.find(Flavor::solo)->mean_nap, 1.0);
  EXPECT_LE(s.find(Flavor::solo)->mean_nap, 2.0);
  EXPECT_GE(s.find(Flavor::majority)->mean_nap, 12.8);
  EXPECT_LE(s.find(Flavor::majority)->mean_nap, 19.2);
  EXPECT_LT(s.find(Flavor::solo)->mean_latency_ms, s.find(Flavor::majority)->mean_latency_ms);
  EXPECT_LT(s.find(Flavor::majority)->mean_latency_ms, s.find(Flavor::sync)->mean_latency_ms);
}

TEST(Bench, MajorityLatencyMatchesInitiatorOracle) {
  auto c = bench_cfg(8, 20, {Flavor::majority});
  auto recs = bench_collectives(c);
  for (const auto& r : recs) {
    const int k = initiator_for_round(c.seed, r.round, 8).id;
    EXPECT_EQ(r.initiator, k);
    EXPECT_EQ(r.nap, k + 1);
    // ranks before the initiator wait for it; the rest find the round done
    EXPECT_EQ(r.latency_us, r.rank < k ? (k - r.rank) * 1000 : 0);
  }
}

TEST(Bench, DeterministicCsv) {
  auto c = bench_cfg(16, 16, {Flavor::sync, Flavor::solo, Flavor::majority});
  c.link_latency_us = 7;
  EXPECT_EQ(bench_csv(bench_collectives(c)), bench_csv(bench_collectives(c)));
}

TEST(Bench, SpeedupAboveOneUnderSkew) {
  for (double unit : {0.05, 1.0, 3.0}) {
    auto c = bench_cfg(8, 8, {Flavor::sync, Flavor::solo});
    c.delay.unit_ms = unit;
    c.link_latency_us = 10;
    auto s = summarize(bench_collectives(c));
    EXPECT_GT(s.speedup(Flavor::sync, Flavor::solo), 1.0) << unit;
  }
}

TEST(Bench, SyncGrowsWithSkewSoloDoesNot) {
  double prev_sync = 0, solo1 = -1;
  for (double scale : {1.0, 2.0, 4.0}) {
    auto c = bench_cfg(16, 16, {Flavor::sync, Flavor::solo});
    c.delay.unit_ms = scale;
    c.link_latency_us = 10;
    auto s = summarize(bench_collectives(c));
    EXPECT_GE(s.find(Flavor::sync)->mean_latency_ms, prev_sync);
    prev_sync = s.find(Flavor::sync)->mean_latency_ms;
    const double solo = s.find(Flavor::solo)->mean_latency_ms;
    if (solo1 < 0) solo1 = solo;
    EXPECT_NEAR(solo, solo1, 0.05 * solo1);
  }
}

TEST(Summary, SingleRecord) {
  auto s = summarize({BenchRecord{Flavor::solo, 0, 0, 2500, 1, 0}});
  ASSERT_EQ(s.flavors.size(), 1u);
  EXPECT_DOUBLE_EQ(s.flavors[0].mean_latency_ms, 2.5);
  EXPECT_DOUBLE_EQ(s.flavors[0].stddev_latency_ms, 0.0);
  EXPECT_THROW(summarize({}), Error);
}

TEST(Summary, MatchesRecomputationFromCsv) {
  auto c = bench_cfg(32, 64, {Flavor::sync, Flavor::majority});
  const auto csv = bench_csv(bench_collectives(c));
  // independent pass over the raw text
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::vector<double>> lat;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string v, fl, round, rank, l;
    std::getline(ss, v, ',');
    std::getline(ss, fl, ',');
    std::getline(ss, round, ',');
    std::getline(ss, rank, ',');
    std::getline(ss, l, ',');
    lat[fl].push_back(std::stod(l) / 1000.0);
  }
  auto s = summarize(parse_bench_csv(csv));
  for (Flavor f : {Flavor::sync, Flavor::majority}) {
    const auto& xs = lat[to_string(f)];
    double m = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - m) * (x - m);
    EXPECT_NEAR(s.find(f)->mean_latency_ms, m, 1e-12);
    EXPECT_NEAR(s.find(f)->stddev_latency_ms, std::sqrt(var / static_cast<double>(xs.size())), 1e-12);
  }
}

TEST(Summary, CsvRoundTripAndJsonLines) {
  auto recs = bench_collectives(bench_cfg(4, 3, {Flavor::majority}));
  auto back = parse_bench_csv(bench_csv(recs));
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].latency_us, recs[i].latency_us);
    EXPECT_EQ(back[i].initiator, recs[i].initiator);
  }
  const auto jl = bench_json_lines(recs);
  EXPECT_EQ(static_cast<std::size_t>(std::count(jl.begin(), jl.end(), '\n')), recs.size());
  EXPECT_THROW(parse_bench_csv("garbage\n"), Error);
  EXPECT_NE(summary_json(summarize(recs)).find("\"mean_nap\""), std::string::npos);
}

TEST(Training, WrapperUsesRunConfig) {
  RunConfig c;
  c.mode = RunMode::train;
  c.p = 4;
  c.flavors = {Flavor::solo};
  c.delay = DelayModel{};
  c.train.dim = 8;
  c.train.n = 500;
  c.train.epochs = 2;
  c.train.compute_ms = 5;
  c.train.keep_metrics = true;
  auto rep = run_training(c);
  EXPECT_EQ(rep.config.p, 4);
  EXPECT_EQ(rep.config.flavor, Flavor::solo);
  EXPECT_EQ(rep.epochs.size(), 2u);
  const auto csv = epochs_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto jl = metrics_json_lines(rep);
  EXPECT_EQ(static_cast<std::size_t>(std::count(jl.begin(), jl.end(), '\n')), rep.metrics.size());
  c.transport = TransportKind::socket;
  EXPECT_THROW(run_training(c), Error);
}

TEST(Suites, InterleavingsAndConservationPass) {
  auto a = interleaving_suite();
  EXPECT_TRUE(a.passed) << a.detail;
  auto b = conservation_suite(60);
  EXPECT_TRUE(b.passed) << b.detail;
}

TEST(Suites, SmallContractSuitePasses) {
  auto r = contract_suite(25, 123);
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_EQ(r.cases, 25u);
}

TEST(Suites, DriftWithinBound) {
  std::vector<DriftResult> runs;
  auto r = drift_suite(0.01, 0.5, &runs);
  EXPECT_TRUE(r.passed) << r.detail;
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_GT(runs[0].mean_drift, runs[1].mean_drift);
}
