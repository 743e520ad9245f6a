#include <gtest/gtest.h>

#include "pcoll/harness.hpp"
#include "pcoll/socket_cluster.hpp"

using namespace pcoll;

namespace {

Message msg(int src, int dst, std::uint32_t step, std::uint8_t fill) {
  Message m;
  m.src = Rank(src);
  m.dst = Rank(dst);
  m.tag = Tag{3, 1, Phase::reduction, step};
  m.payload = Bytes(5, std::byte{fill});
  return m;
}

}  // namespace

TEST(Socket, DeliversInOrderWithTags) {
  SocketNetwork net(3);
  for (std::uint32_t i = 0; i < 100; ++i) net.send(msg(0, 2, i, static_cast<std::uint8_t>(i)));
  net.send(msg(1, 2, 7, 0xAB));
  for (std::uint32_t i = 0; i < 100; ++i) {
    auto m = net.mailbox(Rank(2)).wait_match(TagPattern{Rank(0), std::nullopt, std::nullopt, std::nullopt, std::nullopt});
    EXPECT_EQ(m.tag.step, i);
    EXPECT_EQ(m.tag.collective, 3u);
    EXPECT_EQ(m.payload, Bytes(5, std::byte{static_cast<std::uint8_t>(i)}));
  }
  auto other = net.mailbox(Rank(2)).wait_match(TagPattern::any());
  EXPECT_EQ(other.src, Rank(1));
  EXPECT_EQ(other.payload[0], std::byte{0xAB});
}

TEST(Socket, SelfSendAndErrors) {
  SocketNetwork net(2);
  net.send(msg(1, 1, 0, 1));
  EXPECT_EQ(net.mailbox(Rank(1)).wait_match(TagPattern::any()).src, Rank(1));
  EXPECT_THROW(net.send(msg(0, 5, 0, 0)), Error);
  EXPECT_THROW(net.mailbox(Rank(9)), Error);
  net.close();
  EXPECT_THROW(net.send(msg(0, 1, 0, 0)), Error);
  EXPECT_THROW(net.mailbox(Rank(0)).wait_match(TagPattern::any()), Error);
}

class SocketBench : public ::testing::TestWithParam<ProgressMode> {};

TEST_P(SocketBench, AllFlavorsComplete) {
  RunConfig c;
  c.transport = TransportKind::socket;
  c.progress = GetParam();
  c.p = 5;
  c.rounds = 6;
  c.vector_len = 4;
  c.delay.kind = DelayKind::linear_skew;
  c.delay.unit_ms = 0.3;
  auto recs = bench_collectives(c);
  ASSERT_EQ(recs.size(), 3u * 5u * 6u);
  for (const auto& r : recs) {
    EXPECT_GE(r.latency_us, 0);
    EXPECT_GE(r.nap, 1);
    EXPECT_LE(r.nap, 5);
    if (r.flavor == Flavor::sync) EXPECT_EQ(r.nap, 5);
    if (r.flavor == Flavor::majority) EXPECT_GE(r.nap, r.initiator + 1);
  }
  // every rank saw the same nap in each round
  for (const auto& a : recs) {
    for (const auto& b : recs) {
      if (a.flavor == b.flavor && a.round == b.round) EXPECT_EQ(a.nap, b.nap);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, SocketBench, ::testing::Values(ProgressMode::auxiliary, ProgressMode::caller),
                         [](const auto& info) { return std::string(to_string(info.param)); });
