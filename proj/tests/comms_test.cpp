#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "hgnn/comms.hpp"
#include "hgnn/errors.hpp"

namespace hgnn {
namespace {

std::set<std::pair<std::size_t, std::size_t>> directed_pairs(const std::vector<Transfer>& round) {
  std::set<std::pair<std::size_t, std::size_t>> s;
  for (const auto& t : round) s.emplace(t.src, t.dst);
  return s;
}

TEST(PlanRounds, TwoDevicesOneRound) {
  std::istringstream in("device 2\nlink 0 1 10\n");
  auto topo = parse_topology(in);
  auto req = all_to_all_requests(2, 100);
  auto s = plan_rounds(topo, req);
  ASSERT_EQ(s.num_rounds(), 1u);
  EXPECT_EQ(directed_pairs(s.rounds[0]), (std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 0}}));
  EXPECT_FALSE(validate_schedule(topo, req, s).has_value());
}

TEST(PlanRounds, TwoSwitchesFiveRoundsIntraFirst) {
  auto topo = two_switch_topology();
  auto req = all_to_all_requests(4, 1 << 20);
  auto s = plan_rounds(topo, req);
  ASSERT_EQ(s.num_rounds(), 5u);
  EXPECT_EQ(directed_pairs(s.rounds[0]),
            (std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 0}, {2, 3}, {3, 2}}));
  for (std::size_t r = 1; r < 5; ++r) {
    ASSERT_EQ(s.rounds[r].size(), 2u) << "round " << r + 1;
    const auto& t = s.rounds[r][0];
    EXPECT_NE(*topo.switch_of(t.src), *topo.switch_of(t.dst));
    EXPECT_EQ(s.rounds[r][1].src, t.dst);
    EXPECT_EQ(s.rounds[r][1].dst, t.src);
  }
  std::size_t covered = 0;
  for (const auto& round : s.rounds) covered += round.size();
  EXPECT_EQ(covered, 12u);
  EXPECT_FALSE(validate_schedule(topo, req, s).has_value());
  // Five is the least any pair-exchange schedule can do here.
  EXPECT_EQ(brute_force_schedule(topo, req, 5)->num_rounds(), 5u);
  EXPECT_FALSE(brute_force_schedule(topo, req, 4).has_value());
}

TEST(PlanRounds, EightDevicesMinimal) {
  auto topo = switched_topology(4, 2);
  auto req = all_to_all_requests(8, 64);
  auto s = plan_rounds(topo, req);
  EXPECT_FALSE(validate_schedule(topo, req, s).has_value());
  // Every switch uplink carries 12 pair exchanges, so no schedule of six
  // or fewer rounds exists; the search agrees.
  EXPECT_GT(round_lower_bound(topo, req), 6u);
  EXPECT_FALSE(brute_force_schedule(topo, req, 6).has_value());
  auto best = brute_force_schedule(topo, req, s.num_rounds());
  ASSERT_TRUE(best.has_value());
  EXPECT_EQ(best->num_rounds(), s.num_rounds());
  EXPECT_FALSE(validate_schedule(topo, req, *best).has_value());
}

TEST(ValidateSchedule, CatchesViolations) {
  auto topo = two_switch_topology();
  auto req = all_to_all_requests(4, 10);
  RoundSchedule all_at_once;
  auto& r = all_at_once.rounds.emplace_back();
  for (const auto& q : req) r.push_back({q.src, q.dst, q.payload_bytes, q.ids});
  EXPECT_TRUE(validate_schedule(topo, req, all_at_once).has_value());
  auto s = plan_rounds(topo, req);
  s.rounds.pop_back();
  EXPECT_TRUE(validate_schedule(topo, req, s).has_value());
  auto dup = plan_rounds(topo, req);
  dup.rounds.push_back({dup.rounds[0][0]});
  EXPECT_TRUE(validate_schedule(topo, req, dup).has_value());
}

TEST(SimulateFetch, ZeroRequestsZeroTraffic) {
  auto st = simulate_fetch({}, TransferMode::TWO_SIDED, two_switch_topology());
  EXPECT_EQ(st.total_bytes(), 0u);
  EXPECT_EQ(st.rounds, 0u);
  EXPECT_EQ(st.sync_events, 0u);
}

TEST(SimulateFetch, OneSidedSavesExactlyIndexBytes) {
  auto topo = two_switch_topology();
  auto req = all_to_all_requests(4, 4096, 37);
  auto one = simulate_fetch(req, TransferMode::ONE_SIDED, topo);
  auto two = simulate_fetch(req, TransferMode::TWO_SIDED, topo);
  EXPECT_EQ(one.payload_bytes, two.payload_bytes);
  EXPECT_EQ(one.payload_bytes, 12u * 4096);
  EXPECT_EQ(two.total_bytes() - one.total_bytes(), 12u * 37 * kIndexWidthBytes);
  EXPECT_LT(one.total_bytes(), two.total_bytes());
  EXPECT_EQ(one.sync_events, 0u);
  EXPECT_EQ(two.sync_events, 12u);
}

TEST(SimulateFetch, ByteConservation) {
  auto topo = switched_topology(3, 2);
  std::vector<Request> req;
  for (std::size_t s = 0; s < 6; ++s)
    for (std::size_t d = 0; d < 6; ++d)
      if (s != d) req.push_back({s, d, 100 * s + d + 1, s + d});
  auto st = simulate_fetch(req, TransferMode::ONE_SIDED, topo);
  std::uint64_t want = 0;
  for (const auto& r : req) want += r.payload_bytes;
  EXPECT_EQ(st.payload_bytes, want);
}

TEST(SimulateFetch, RoundsBeatSingleShotCongestion) {
  auto topo = two_switch_topology();
  auto req = all_to_all_requests(4, 1 << 20, 1024);
  for (auto mode : {TransferMode::ONE_SIDED, TransferMode::TWO_SIDED}) {
    auto planned = simulate_fetch(req, mode, topo);
    auto naive = simulate_single_shot(req, mode, topo);
    EXPECT_LT(planned.max_link_load, naive.max_link_load);
    EXPECT_EQ(planned.total_bytes(), naive.total_bytes());
  }
}

TEST(Topology, ParseAndValidate) {
  std::istringstream in(
      "# two switches\n"
      "device 4\n"
      "switch 0: 0 1\n"
      "switch 1: 2 3\n"
      "link 0 sw0 16\nlink 1 sw0 16\nlink 2 sw1 16\nlink 3 sw1 16\n"
      "link sw0 host 8\nlink sw1 host 8\n");
  auto t = parse_topology(in);
  EXPECT_EQ(t.num_devices, 4u);
  EXPECT_EQ(*t.switch_of(3), 1u);
  EXPECT_EQ(plan_rounds(t, all_to_all_requests(4, 1)).num_rounds(), 5u);

  std::istringstream bad("device 2\nlink 0 zz 1\n");
  EXPECT_THROW(parse_topology(bad), ParseError);
  std::istringstream disconnected("device 3\nlink 0 1 1\n");
  EXPECT_THROW(parse_topology(disconnected), ParseError);
}

TEST(PartitionFeatures, BalancedContiguousRanges) {
  EXPECT_EQ(partition_features(10, 1), std::vector<std::uint32_t>(10, 0));
  auto p = partition_features(10, 4);
  std::vector<std::size_t> sizes(4, 0);
  for (std::size_t v = 0; v < 10; ++v) {
    ++sizes[p[v]];
    if (v > 0) {
      EXPECT_LE(p[v - 1], p[v]);
    }
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 2, 2}));
  EXPECT_THROW(partition_features(10, 0), std::invalid_argument);
}

TEST(FeatureRequests, CountsRemoteRows) {
  auto owner = partition_features(8, 2);  // 0-3 on device 0, 4-7 on device 1
  std::vector<std::vector<std::uint32_t>> needed{{0, 5, 6}, {1, 2, 7}};
  auto req = feature_requests(owner, needed, 16, 2);
  ASSERT_EQ(req.size(), 2u);
  EXPECT_EQ(req[0].src, 1u);
  EXPECT_EQ(req[0].dst, 0u);
  EXPECT_EQ(req[0].ids, 2u);
  EXPECT_EQ(req[0].payload_bytes, 32u);
  EXPECT_EQ(req[1].ids, 2u);
}

}  // namespace
}  // namespace hgnn
