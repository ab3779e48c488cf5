#include <gtest/gtest.h>

#include "nettack/graph.hpp"
#include "nettack/synthetic.hpp"
#include "oracles.hpp"

using namespace nettack;

TEST(FlipEdge, InsertIntoEmptyGraph) {
  AttributedGraph g(3, 0);
  EXPECT_TRUE(g.flip_edge(0, 1));
  EXPECT_EQ(g.edge_list(), (std::vector<std::pair<NodeId, NodeId>>{{0, 1}}));
  EXPECT_TRUE(g.has_edge(1, 0));
}

TEST(FlipEdge, DoubleFlipRestoresGraph) {
  auto g = erdos_renyi(12, 0.3, 7);
  const auto before = g;
  g.flip_edge(0, 1);
  g.flip_edge(0, 1);
  EXPECT_EQ(g, before);
}

TEST(FlipEdge, RejectsSelfLoopAndOutOfRange) {
  AttributedGraph g(3, 0);
  EXPECT_THROW(g.flip_edge(2, 2), std::invalid_argument);
  EXPECT_THROW(g.flip_edge(0, 3), std::out_of_range);
}

TEST(FlipFeature, TogglesOneEntry) {
  AttributedGraph g(2, 4);
  EXPECT_FALSE(g.has_feature(1, 2));
  EXPECT_TRUE(g.flip_feature(1, 2));
  EXPECT_TRUE(g.has_feature(1, 2));
  EXPECT_EQ(g.num_feature_entries(), 1u);
  EXPECT_FALSE(g.flip_feature(1, 2));
  EXPECT_EQ(g.num_feature_entries(), 0u);
  EXPECT_THROW(g.flip_feature(2, 0), std::out_of_range);
  EXPECT_THROW(g.flip_feature(0, 4), std::out_of_range);
}

TEST(Degree, Basics) {
  AttributedGraph g(5, 0);
  EXPECT_EQ(g.degree(0), 0u);
  for (NodeId leaf = 1; leaf < 5; ++leaf) g.flip_edge(0, leaf);
  EXPECT_EQ(g.degree(0), 4u);
  EXPECT_EQ(g.degree(3), 1u);
  g.flip_edge(1, 2);
  EXPECT_EQ(g.degree(1), 2u);
  EXPECT_THROW(g.degree(5), std::out_of_range);
}

TEST(TwoHop, SmallCases) {
  AttributedGraph iso(3, 0);
  EXPECT_EQ(iso.two_hop_neighborhood(1), std::vector<NodeId>{1});

  AttributedGraph path(4, 0);
  path.flip_edge(0, 1);
  path.flip_edge(1, 2);
  path.flip_edge(2, 3);
  EXPECT_EQ(path.two_hop_neighborhood(0), (std::vector<NodeId>{0, 1, 2}));
}

TEST(TwoHop, MatchesBfsOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = erdos_renyi(20, 0.3, seed);
    for (NodeId u = 0; u < g.num_nodes(); ++u) EXPECT_EQ(g.two_hop_neighborhood(u), oracle::bfs_depth2(g, u));
  }
}

// Random flip sequences keep the adjacency symmetric, binary, loop-free and
// the degree sum equal to twice the edge count.
TEST(GraphProperty, InvariantsUnderRandomFlips) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = erdos_renyi(15, 0.2, 100 + trial, 6);
    for (int step = 0; step < 200; ++step) {
      if (uniform_index(rng, 3) == 0) {
        g.flip_feature(static_cast<NodeId>(uniform_index(rng, 15)), static_cast<FeatureId>(uniform_index(rng, 6)));
        continue;
      }
      NodeId u = static_cast<NodeId>(uniform_index(rng, 15)), v = static_cast<NodeId>(uniform_index(rng, 15));
      if (u == v) continue;
      g.flip_edge(u, v);
    }
    const auto a = oracle::dense_adjacency(g);
    EXPECT_TRUE(a.isApprox(a.transpose()));
    EXPECT_EQ(a.diagonal().sum(), 0.0);
    std::size_t deg_sum = 0;
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      deg_sum += g.degree(u);
      EXPECT_EQ(static_cast<double>(g.degree(u)), a.row(u).sum());
      EXPECT_FALSE(g.has_edge(u, u));
    }
    EXPECT_EQ(deg_sum, 2 * g.num_edges());
  }
}

TEST(Perturbation, ApplyChecksDirection) {
  AttributedGraph g(3, 2);
  apply(g, Perturbation::edge(2, 0, Direction::Insert));
  EXPECT_TRUE(g.has_edge(0, 2));
  EXPECT_THROW(apply(g, Perturbation::edge(0, 2, Direction::Insert)), std::logic_error);
  apply(g, Perturbation::feature(1, 1, Direction::Insert));
  EXPECT_THROW(apply(g, Perturbation::feature(1, 0, Direction::Remove)), std::logic_error);
}

TEST(Labels, RangeChecked) {
  AttributedGraph g(2, 1, 3);
  g.set_label(0, 2);
  EXPECT_EQ(g.label(0), 2);
  EXPECT_FALSE(g.is_labeled(1));
  EXPECT_THROW(g.set_label(1, 3), std::out_of_range);
}
