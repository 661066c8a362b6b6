#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hgnn/errors.hpp"
#include "hgnn/graph_store.hpp"
#include "test_util.hpp"

namespace hgnn {
namespace {

using testing::coo_in_neighbors;
using testing::random_coo;
using testing::sorted;

std::uint64_t col_checksum(const Csr2Graph& g) {
  std::uint64_t h = 1469598103934665603ULL;
  for (NodeId c : g.col_indices()) h = (h ^ c) * 1099511628211ULL;
  return h;
}

CooGraph three_node() {
  CooGraph g;
  g.num_nodes = 3;
  g.add_edge(1, 0);
  g.add_edge(2, 0);
  g.add_edge(2, 1);
  return g;
}

TEST(BuildCsr2, EmptyGraph) {
  CooGraph g;
  g.num_nodes = 3;
  Csr2Graph c = build_csr2(g);
  EXPECT_EQ(std::vector<EdgeIdx>(c.start().begin(), c.start().end()), (std::vector<EdgeIdx>{0, 0, 0}));
  EXPECT_EQ(std::vector<EdgeIdx>(c.end().begin(), c.end().end()), (std::vector<EdgeIdx>{0, 0, 0}));
}

TEST(BuildCsr2, HandEnumeratedInNeighbors) {
  Csr2Graph c = build_csr2(three_node());
  EXPECT_EQ(sorted(c.neighbors(0)), (std::vector<NodeId>{1, 2}));
  EXPECT_EQ(sorted(c.neighbors(1)), (std::vector<NodeId>{2}));
  EXPECT_TRUE(c.neighbors(2).empty());
}

TEST(BuildCsr2, MatchesCooScanAndOffsetInvariants) {
  Rng rng(7);
  CooGraph g = random_coo(50, 200, rng);
  Csr2Graph c = build_csr2(g);
  auto want = coo_in_neighbors(g);
  for (NodeId v = 0; v < 50; ++v) EXPECT_EQ(sorted(c.neighbors(v)), want[v]) << "node " << v;
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_LE(c.start()[i], c.end()[i]);
    EXPECT_LE(c.end()[i], c.num_edges());
    if (i > 0) {
      EXPECT_EQ(c.start()[i], c.end()[i - 1]);
    }
  }
}

TEST(BuildCsr2, RejectsOutOfRangeIds) {
  CooGraph g;
  g.num_nodes = 2;
  g.add_edge(0, 2);
  EXPECT_THROW(build_csr2(g), std::invalid_argument);
}

TEST(BuildCsr2, KeepsDuplicateEdges) {
  CooGraph g;
  g.num_nodes = 2;
  g.add_edge(1, 0);
  g.add_edge(1, 0);
  EXPECT_EQ(build_csr2(g).neighbors(0).size(), 2u);
}

TEST(Csr2, StorageIsTwoOffsetsPerNodePlusEdges) {
  Rng rng(3);
  CooGraph g = random_coo(40, 123, rng);
  Csr2Graph c = build_csr2(g);
  EXPECT_EQ(c.storage_cells(), 2 * 40 + 123u);
}

TEST(Prune, EmptyNodeHasNoObservableChange) {
  Csr2Graph c = build_csr2(three_node());
  const auto before = col_checksum(c);
  c.prune_in_neighbors(2);
  EXPECT_TRUE(c.neighbors(2).empty());
  EXPECT_EQ(sorted(c.neighbors(0)), (std::vector<NodeId>{1, 2}));
  EXPECT_EQ(col_checksum(c), before);
}

TEST(Prune, TriangleLeavesOtherNodesAlone) {
  CooGraph g;
  g.num_nodes = 3;
  for (NodeId a = 0; a < 3; ++a)
    for (NodeId b = 0; b < 3; ++b)
      if (a != b) g.add_edge(a, b);
  Csr2Graph c = build_csr2(g);
  c.prune_in_neighbors(0);
  EXPECT_TRUE(c.neighbors(0).empty());
  EXPECT_EQ(sorted(c.neighbors(1)), (std::vector<NodeId>{0, 2}));
  EXPECT_EQ(sorted(c.neighbors(2)), (std::vector<NodeId>{0, 1}));
}

TEST(Prune, ConstantWritesAndColumnsUntouched) {
  Rng rng(11);
  Csr2Graph c = build_csr2(random_coo(200, 2000, rng));
  const auto before = col_checksum(c);
  const auto* data = c.col_indices().data();
  for (NodeId v = 0; v < 200; v += 7) {
    const auto w0 = c.prune_writes();
    c.prune_in_neighbors(v);
    EXPECT_LE(c.prune_writes() - w0, 2u);
    EXPECT_EQ(c.end()[v], c.start()[v]);
  }
  EXPECT_EQ(col_checksum(c), before);
  EXPECT_EQ(c.col_indices().data(), data);
}

TEST(Prune, RandomSequencesMatchCooDeletionOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<std::size_t> nd(1, 30);
    const std::size_t n = nd(rng);
    CooGraph g = random_coo(n, nd(rng) * 3, rng);
    Csr2Graph c = build_csr2(g);
    std::vector<std::uint8_t> dropped(n, 0);
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
    for (int k = 0; k < 5; ++k) {
      const NodeId v = pick(rng);
      c.prune_in_neighbors(v);
      dropped[v] = 1;
    }
    // Oracle: rebuild the edge list without the removed in-edges.
    CooGraph kept;
    kept.num_nodes = n;
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      if (!dropped[g.dst[e]]) kept.add_edge(g.src[e], g.dst[e]);
    auto want = coo_in_neighbors(kept);
    for (NodeId v = 0; v < n; ++v) ASSERT_EQ(sorted(c.neighbors(v)), want[v]) << "trial " << trial << " node " << v;
  }
}

TEST(Prune, OutOfRangeRejected) {
  Csr2Graph c = build_csr2(three_node());
  EXPECT_THROW(c.prune_in_neighbors(3), std::out_of_range);
  EXPECT_THROW((void)c.neighbors(5), std::out_of_range);
}

TEST(Neighbors, EqualCsrOnRandomGraphs) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    CooGraph g = random_coo(25, 80, rng);
    CsrGraph csr = build_csr(g);
    Csr2Graph c2 = build_csr2(g);
    for (NodeId v = 0; v < 25; ++v) ASSERT_EQ(sorted(c2.neighbors(v)), sorted(csr.neighbors(v)));
  }
}

TEST(InDegrees, MatchCooScanAndTrackPrunes) {
  Rng rng(9);
  CooGraph g = random_coo(30, 90, rng);
  auto want = coo_in_neighbors(g);
  Csr2Graph c = build_csr2(g);
  auto deg = in_degrees(c);
  auto deg_coo = in_degrees(g);
  for (NodeId v = 0; v < 30; ++v) {
    EXPECT_EQ(deg[v], want[v].size());
    EXPECT_EQ(deg_coo[v], want[v].size());
  }
  c.prune_in_neighbors(4);
  EXPECT_EQ(in_degrees(c)[4], 0u);
}

TEST(ToCoo, RoundTripPreservesEdgeMultiset) {
  Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    CooGraph g = random_coo(20, 60, rng);
    EXPECT_EQ(testing::sorted_edges(to_coo(build_csr2(g))), testing::sorted_edges(g));
  }
}

// Dense (D+I)^-1/2 (A+I) (D+I)^-1/2 with D the in-degree.
std::vector<std::vector<double>> dense_a_hat(const CooGraph& g) {
  const std::size_t n = g.num_nodes;
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  std::vector<double> deg(n, 0.0);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    a[g.dst[e]][g.src[e]] += 1.0;
    deg[g.dst[e]] += 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) a[i][i] += 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] /= std::sqrt(deg[i] + 1.0) * std::sqrt(deg[j] + 1.0);
  return a;
}

TEST(NormalizeAdjacency, IsolatedNodeHasUnitSelfWeight) {
  CooGraph g;
  g.num_nodes = 1;
  auto a = normalize_adjacency(g);
  EXPECT_DOUBLE_EQ(a.at(0, 0), 1.0);
}

TEST(NormalizeAdjacency, PathGraphMatchesDenseFormula) {
  CooGraph g;
  g.num_nodes = 3;
  for (auto [x, y] : {std::pair<NodeId, NodeId>{0, 1}, {1, 2}}) {
    g.add_edge(x, y);
    g.add_edge(y, x);
  }
  auto a = normalize_adjacency(g);
  auto want = dense_a_hat(g);
  for (NodeId i = 0; i < 3; ++i)
    for (NodeId j = 0; j < 3; ++j) EXPECT_NEAR(a.at(i, j), want[i][j], 1e-12);
  EXPECT_NEAR(a.at(0, 1), 1.0 / std::sqrt(6.0), 1e-12);
}

TEST(NormalizeAdjacency, RandomUndirectedIsSymmetricAndBounded) {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    CooGraph g = testing::random_undirected(64, 150, rng);
    auto a = normalize_adjacency(g);
    auto want = dense_a_hat(g);
    double asym = 0.0;
    for (NodeId i = 0; i < 64; ++i)
      for (NodeId j = 0; j < 64; ++j) {
        ASSERT_NEAR(a.at(i, j), want[i][j], 1e-12);
        asym = std::max(asym, std::abs(a.at(i, j) - a.at(j, i)));
      }
    EXPECT_LT(asym, 1e-12);
  }
  // Rows of (A+I) sum to degree + 1.
  CooGraph g = testing::random_undirected(10, 12, rng);
  auto deg = in_degrees(g);
  auto a = normalize_adjacency(g);
  for (NodeId v = 0; v < 10; ++v)
    for (auto e = a.row_offsets[v]; e < a.row_offsets[v + 1]; ++e) {
      EXPECT_GT(a.weights[e], 0.0);
      EXPECT_LE(a.weights[e], 1.0 + 1e-15);
    }
  for (NodeId v = 0; v < 10; ++v) {
    std::size_t mult = 1;
    for (std::size_t e = 0; e < g.num_edges(); ++e) mult += g.dst[e] == v;
    EXPECT_EQ(mult, deg[v] + 1);
  }
}

TEST(EdgeList, ParsesCommentsAndInfersNodeCount) {
  std::istringstream in("# header\n0 1\n\n2 0\n");
  CooGraph g = read_edge_list(in);
  EXPECT_EQ(g.num_nodes, 3u);
  EXPECT_EQ(g.num_edges(), 2u);
}

TEST(EdgeList, ParseErrorsNameLine) {
  std::istringstream bad("0 1\n1 x\n");
  try {
    (void)read_edge_list(bad, 0, "edges.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.file(), "edges.txt");
  }
  std::istringstream range("0 5\n");
  EXPECT_THROW((void)read_edge_list(range, 3), ParseError);
}

TEST(EdgeList, WriteReadRoundTrip) {
  Rng rng(1);
  CooGraph g = random_coo(12, 30, rng);
  std::stringstream ss;
  write_edge_list(ss, g);
  CooGraph back = read_edge_list(ss, 12);
  EXPECT_EQ(back.src, g.src);
  EXPECT_EQ(back.dst, g.dst);
}

}  // namespace
}  // namespace hgnn
