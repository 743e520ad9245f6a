#include <gtest/gtest.h>

#include <cmath>
#include <queue>
#include <random>

#include "pcoll/collectives.hpp"
#include "pcoll/delay.hpp"
#include "pcoll/sim_cluster.hpp"

using namespace pcoll;

namespace {

CollectiveConfig make_cfg(int p, Flavor f, std::size_t len = 2, std::uint64_t seed = 11) {
  CollectiveConfig c;
  c.p = p;
  c.flavor = f;
  c.vector_len = len;
  c.seed = seed;
  return c;
}

std::vector<ContributionPayload> fresh_all(const CollectiveConfig& cfg, const std::vector<std::vector<double>>& v) {
  std::vector<ContributionPayload> out;
  for (int r = 0; r < cfg.p; ++r) out.push_back(ContributionPayload::fresh(cfg, Rank(r), v[static_cast<std::size_t>(r)]));
  return out;
}

std::vector<std::vector<double>> random_vectors(int p, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  std::vector<std::vector<double>> v(static_cast<std::size_t>(p), std::vector<double>(len));
  for (auto& row : v) {
    for (auto& x : row) x = d(rng);
  }
  return v;
}

struct OneRound {
  RoundOutcome outcome;
  std::vector<CollectiveResult> results;
};

OneRound run_one(const CollectiveConfig& cfg, const std::vector<std::vector<double>>& data,
                 std::vector<SimTime> arrival = {}, SimTime latency = 0) {
  SimCluster cluster(cfg.p, latency);
  auto& g = cluster.add_collective(cfg);
  if (arrival.empty()) arrival.assign(static_cast<std::size_t>(cfg.p), 0);
  OneRound r;
  r.outcome = run_round(cluster, g, cfg.round, arrival, fresh_all(cfg, data));
  for (int i = 0; i < cfg.p; ++i) r.results.push_back(*g.record(cfg.round, i).result);
  return r;
}

// Independent splitmix64 for the majority initiator stream.
std::uint64_t oracle_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

int oracle_initiator(std::uint64_t seed, std::uint64_t round, int p) {
  std::uint64_t draw = oracle_mix(seed + (round + 1) * 0x9E3779B97F4A7C15ull);
  return static_cast<int>((static_cast<unsigned __int128>(draw) * static_cast<unsigned>(p)) >> 64);
}

}  // namespace

TEST(AllreduceSync, TwoTermAverage) {
  auto cfg = make_cfg(2, Flavor::sync);
  auto r = run_one(cfg, {{2, 4}, {4, 8}});
  for (const auto& res : r.results) {
    EXPECT_EQ(res.u, (std::vector<double>{3, 6}));
    EXPECT_EQ(res.included[0], 0b11u);
    EXPECT_EQ(res.nap, 2);
  }
}

TEST(AllreduceSync, SingleRankIsIdentity) {
  auto cfg = make_cfg(1, Flavor::sync, 3);
  auto r = run_one(cfg, {{1.5, -2, 7}});
  EXPECT_EQ(r.results[0].u, (std::vector<double>{1.5, -2, 7}));
  EXPECT_EQ(r.results[0].included[0], 1u);
}

TEST(AllreduceSync, MatchesSerialSum) {
  for (int p : {3, 5, 6, 7, 8, 12}) {
    auto cfg = make_cfg(p, Flavor::sync, 16);
    auto data = random_vectors(p, 16, 1000 + static_cast<std::uint64_t>(p));
    auto r = run_one(cfg, data);
    for (std::size_t k = 0; k < 16; ++k) {
      double serial = 0;
      for (int i = 0; i < p; ++i) serial += data[static_cast<std::size_t>(i)][k];
      serial /= p;
      for (const auto& res : r.results) EXPECT_NEAR(res.u[k], serial, 1e-12 * std::max(1.0, std::abs(serial)));
    }
    for (const auto& res : r.results) {
      EXPECT_EQ(res.raw, r.results[0].raw) << "p=" << p;
      EXPECT_EQ(res.nap, p);
    }
  }
}

TEST(AllreduceSync, CompletesAfterSlowestRank) {
  auto cfg = make_cfg(4, Flavor::sync);
  auto r = run_one(cfg, random_vectors(4, 2, 3), {1000, 2000, 3000, 4000});
  std::vector<SimTime> waits;
  for (const auto& rr : r.outcome.ranks) waits.push_back(rr.exit - rr.enter);
  EXPECT_EQ(waits, (std::vector<SimTime>{3000, 2000, 1000, 0}));
}

TEST(AllreduceSync, I64Elements) {
  auto cfg = make_cfg(4, Flavor::sync, 2);
  cfg.element = ElementType::i64;
  SimCluster cluster(4);
  auto& g = cluster.add_collective(cfg);
  std::vector<ContributionPayload> pl;
  for (int r = 0; r < 4; ++r) {
    std::vector<std::int64_t> v{r, 10 * r};
    pl.push_back(ContributionPayload::fresh(cfg, Rank(r), v));
  }
  run_round(cluster, g, 0, std::vector<SimTime>(4, 0), pl);
  auto res = *g.record(0, 2).result;
  EXPECT_DOUBLE_EQ(res.u[0], 6.0 / 4);
  EXPECT_DOUBLE_EQ(res.u[1], 60.0 / 4);
}

TEST(Contribution, LengthMismatchThrows) {
  auto cfg = make_cfg(2, Flavor::solo, 3);
  std::vector<double> v{1, 2};
  try {
    ContributionPayload::fresh(cfg, Rank(0), v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::length_mismatch);
  }
  SimCluster cluster(2);
  auto& g = cluster.add_collective(cfg);
  ContributionPayload bad{Bytes(5)};
  EXPECT_THROW(g.at(0).join(0, bad), Error);
}

TEST(Contribution, NullHasEmptyMask) {
  auto cfg = make_cfg(70, Flavor::solo, 2);
  auto n = ContributionPayload::null(cfg);
  EXPECT_TRUE(n.is_null(cfg));
  EXPECT_EQ(n.mask(cfg), (std::vector<std::uint64_t>{0, 0}));
  std::vector<double> v{1, 2};
  auto f = ContributionPayload::fresh(cfg, Rank(65), v);
  EXPECT_EQ(f.mask(cfg), (std::vector<std::uint64_t>{0, 2}));
  EXPECT_EQ(f.data(cfg), v);
}

TEST(AllreduceSolo, ZeroSkewBehavesAsSync) {
  auto data = random_vectors(8, 4, 77);
  auto solo = run_one(make_cfg(8, Flavor::solo, 4), data);
  auto sync = run_one(make_cfg(8, Flavor::sync, 4), data);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(solo.results[static_cast<std::size_t>(i)].raw, sync.results[static_cast<std::size_t>(i)].raw);
    EXPECT_EQ(solo.results[static_cast<std::size_t>(i)].nap, 8);
  }
}

TEST(AllreduceSolo, SkewedWaitIsNearZero) {
  auto cfg = make_cfg(4, Flavor::solo);
  auto r = run_one(cfg, random_vectors(4, 2, 5), {1000, 2000, 3000, 4000});
  for (const auto& rr : r.outcome.ranks) EXPECT_EQ(rr.exit - rr.enter, 0);
  EXPECT_EQ(r.outcome.initiator, 0);
  EXPECT_EQ(r.results[0].nap, 1);
  EXPECT_TRUE(r.results[0].includes(0));
}

TEST(AllreduceSolo, IncludedMatchesFreshContributors) {
  // ranks 0 and 2 arrive together, the rest long after
  auto cfg = make_cfg(6, Flavor::solo, 3);
  auto data = random_vectors(6, 3, 8);
  auto r = run_one(cfg, data, {0, 50000, 0, 50000, 50000, 50000}, 10);
  const auto& res = r.results[4];
  EXPECT_EQ(res.included[0], 0b000101u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(res.u[k], (data[0][k] + data[2][k]) / 6);
  for (const auto& x : r.results) EXPECT_EQ(x.raw, res.raw);
}

namespace {

// BFS over the directed activation edges r -> (r + 2^j) mod p. A rank that
// received on dimension k forwards on every j > k; the root on every j. The
// search runs over (rank, arrival dimension) states.
int bfs_max_hops(int root, int p) {
  int d = 0;
  while ((1 << d) < p) ++d;
  const auto ps = static_cast<std::size_t>(p);
  std::vector<std::vector<int>> seen(ps, std::vector<int>(static_cast<std::size_t>(d) + 1, -1));
  std::vector<int> hops(ps, -1);
  std::queue<std::pair<int, int>> q;  // (rank, dimension it arrived on; -1 for root)
  hops[static_cast<std::size_t>(root)] = 0;
  q.push({root, -1});
  std::vector<int> dist_of(ps * (static_cast<std::size_t>(d) + 2), 0);
  auto key = [&](int r, int via) { return static_cast<std::size_t>(r) * (static_cast<std::size_t>(d) + 2) + static_cast<std::size_t>(via + 1); };
  while (!q.empty()) {
    auto [r, via] = q.front();
    q.pop();
    const int dist = dist_of[key(r, via)];
    for (int j = via + 1; j < d; ++j) {
      int n = (r + (1 << j)) % p;
      auto& s = seen[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
      if (s >= 0) continue;
      s = dist + 1;
      dist_of[key(n, j)] = dist + 1;
      auto& h = hops[static_cast<std::size_t>(n)];
      if (h < 0 || dist + 1 < h) h = dist + 1;
      q.push({n, j});
    }
  }
  int worst = 0;
  for (int h : hops) {
    if (h < 0) return -1;
    worst = std::max(worst, h);
  }
  return worst;
}

}  // namespace

TEST(AllreduceSolo, ActivationReachesAllInLogHops) {
  EXPECT_EQ(bfs_max_hops(3, 4), 2);
  for (int t = 0; t < 4; ++t) EXPECT_LE(activation_hops(3, t, 4), 2);

  // simulated: rank 3 arrives first, others far later; with 100 us links every
  // rank must be activated by 2 hops = 200 us
  auto cfg = make_cfg(4, Flavor::solo);
  SimCluster cluster(4, 100);
  std::vector<SimTime> activated(4, -1);
  cluster.set_trace_sink([&](const TraceEvent& ev) {
    if (ev.action == TraceEvent::Action::fire && ev.kind == OpKind::compute &&
        activated[static_cast<std::size_t>(ev.rank)] < 0) {
      activated[static_cast<std::size_t>(ev.rank)] = ev.time;
    }
  });
  auto& g = cluster.add_collective(cfg);
  run_round(cluster, g, 0, {10000, 10000, 10000, 0}, fresh_all(cfg, random_vectors(4, 2, 1)));
  for (SimTime t : activated) EXPECT_LE(t, 200);
}

TEST(AllreduceSolo, BinomialUnionCoversAnyP) {
  for (int p = 1; p <= 40; ++p) {
    int bound = 0;
    while ((1 << bound) < p) ++bound;
    for (int root = 0; root < p; ++root) {
      int h = bfs_max_hops(root, p);
      ASSERT_GE(h, 0) << "p=" << p;
      ASSERT_LE(h, bound);
      for (int t = 0; t < p; ++t) ASSERT_LE(activation_hops(root, t, p), bound);
    }
  }
}

TEST(AllreduceSolo, NonPowerOfTwoRanksUnderSkew) {
  for (int p : {3, 5, 6, 7, 9, 13}) {
    auto cfg = make_cfg(p, Flavor::solo, 4);
    std::vector<SimTime> arr;
    for (int i = 0; i < p; ++i) arr.push_back(static_cast<SimTime>(((i * 7) % p) * 1000));
    auto r = run_one(cfg, random_vectors(p, 4, static_cast<std::uint64_t>(p)), arr, 5);
    for (const auto& x : r.results) {
      EXPECT_EQ(x.raw, r.results[0].raw);
      EXPECT_GE(x.nap, 1);
    }
  }
}

TEST(Majority, SingleRank) {
  auto cfg = make_cfg(1, Flavor::majority, 1);
  for (Generation t = 0; t < 20; ++t) EXPECT_EQ(initiator_for_round(cfg.seed, t, 1), Rank(0));
  auto r = run_one(cfg, {{4.0}});
  EXPECT_EQ(r.results[0].nap, 1);
  EXPECT_EQ(r.results[0].u[0], 4.0);
}

TEST(Majority, InitiatorSequenceMatchesIndependentStream) {
  const std::uint64_t seed = 0xC0FFEE;
  for (Generation t = 0; t < 10; ++t) {
    EXPECT_EQ(initiator_for_round(seed, t, 8).id, oracle_initiator(seed, t, 8));
  }
  std::vector<int> frozen;
  for (Generation t = 0; t < 10; ++t) frozen.push_back(oracle_initiator(seed, t, 8));
  std::vector<int> again;
  for (Generation t = 0; t < 10; ++t) again.push_back(initiator_for_round(seed, t, 8).id);
  EXPECT_EQ(frozen, again);
}

TEST(Majority, InitiatorIsUniform) {
  std::vector<int> counts(8, 0);
  const int n = 100000;
  for (int t = 0; t < n; ++t) ++counts[static_cast<std::size_t>(initiator_for_round(42, static_cast<Generation>(t), 8).id)];
  const double mean = n / 8.0;
  const double sigma = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
  double chi2 = 0;
  for (int c : counts) {
    EXPECT_NEAR(c, mean, 3 * sigma);
    chi2 += (c - mean) * (c - mean) / mean;
  }
  // 7 degrees of freedom, 0.999 quantile
  EXPECT_LT(chi2, 24.32);
}

TEST(Majority, OnlyInitiatorTriggers) {
  auto cfg = make_cfg(4, Flavor::majority, 1, 5);
  const int init = initiator_for_round(cfg.seed, 0, 4).id;
  // initiator arrives last: majority degrades to sync for this round
  std::vector<SimTime> arr(4, 1000);
  arr[static_cast<std::size_t>(init)] = 9000;
  auto r = run_one(cfg, {{1}, {2}, {3}, {4}}, arr);
  EXPECT_EQ(r.results[0].nap, 4);
  EXPECT_EQ(r.outcome.initiator, init);
  for (int i = 0; i < 4; ++i) {
    if (i != init) EXPECT_EQ(r.outcome.ranks[static_cast<std::size_t>(i)].exit, 9000);
  }
}

TEST(Majority, ExpectedQuorumIsHalf) {
  // sorted arrivals: the initiator's expected position is (P+1)/2
  const int p = 16;
  auto cfg = make_cfg(p, Flavor::majority, 1, 2024);
  SimCluster cluster(p);
  auto& g = cluster.add_collective(cfg);
  DelayModel skew;
  skew.kind = DelayKind::linear_skew;
  double nap_sum = 0;
  const int rounds = 256;
  for (int t = 0; t < rounds; ++t) {
    std::vector<SimTime> arr;
    std::vector<ContributionPayload> pl;
    for (int r = 0; r < p; ++r) {
      arr.push_back(inject_delay(Rank(r), static_cast<Generation>(t), skew, p));
      pl.push_back(ContributionPayload::fresh(cfg, Rank(r), std::vector<double>{1.0}));
    }
    run_round(cluster, g, static_cast<Generation>(t), arr, pl);
    nap_sum += g.record(static_cast<Generation>(t), 0).result->nap;
  }
  EXPECT_NEAR(nap_sum / rounds, (p + 1) / 2.0, 0.1 * p);
}

TEST(Flavor, ZeroSkewAllFlavorsAgree) {
  auto data = random_vectors(8, 5, 31);
  auto a = run_one(make_cfg(8, Flavor::sync, 5), data);
  auto b = run_one(make_cfg(8, Flavor::solo, 5), data);
  auto c = run_one(make_cfg(8, Flavor::majority, 5), data);
  EXPECT_EQ(a.results[0].raw, b.results[0].raw);
  EXPECT_EQ(a.results[0].raw, c.results[0].raw);
}

TEST(Flavor, ParseRoundTrip) {
  for (auto f : {Flavor::sync, Flavor::solo, Flavor::majority}) EXPECT_EQ(parse_flavor(to_string(f)), f);
  EXPECT_THROW(parse_flavor("quorum"), Error);
}

TEST(Safety, RandomSkewsBitIdenticalAcrossRanks) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const int p = 2 + static_cast<int>(rng() % 15);
    const auto f = static_cast<Flavor>(rng() % 3);
    auto cfg = make_cfg(p, f, 3, rng());
    SimCluster cluster(p, static_cast<SimTime>(rng() % 20));
    auto& g = cluster.add_collective(cfg);
    for (Generation t = 0; t < 5; ++t) {
      std::vector<SimTime> arr;
      for (int r = 0; r < p; ++r) arr.push_back(static_cast<SimTime>(rng() % 5000));
      run_round(cluster, g, t, arr, fresh_all(cfg, random_vectors(p, 3, rng())));
      const auto& first = *g.record(t, 0).result;
      ASSERT_GE(first.nap, 1);
      for (int r = 1; r < p; ++r) ASSERT_EQ(g.record(t, r).result->raw, first.raw);
    }
  }
}
