// Protection plans, context extraction and augmentation.

#include <gtest/gtest.h>

#include <set>

#include "ctp/context.hpp"
#include "test_support.hpp"

using namespace ctp;
using ctp::testing::graph_from_pairs;
using ctp::testing::path_graph;

namespace {

std::set<NodeId> as_set(const std::vector<NodeId>& v) { return {v.begin(), v.end()}; }

// Star-like subgraph around node 0 with 19 leaves (20 nodes).
Subgraph twenty_node_subgraph() {
  Subgraph s;
  s.anchor = 0;
  for (NodeId v = 0; v < 20; ++v) {
    s.nodes.push_back(v);
    s.hops.push_back(v == 0 ? 0 : 1);
  }
  return s;
}

Graph wheel(std::size_t spokes) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (NodeId i = 1; i <= spokes; ++i) {
    pairs.emplace_back(0, i);
    pairs.emplace_back(i, i % spokes + 1);
  }
  return graph_from_pairs(spokes + 1, pairs, 3);
}

}  // namespace

TEST(ProtectionPlan, ZeroFractionProtectsOnlyEpisodeNodes) {
  const Subgraph s = twenty_node_subgraph();
  const ProtectionPlan plan = build_protection_plan(s, {1, 2, 3}, {4, 5, 6, 7}, 0.0, 1);
  EXPECT_EQ(plan.protect, (std::set<NodeId>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(plan.remain.size(), 12u);
  EXPECT_EQ(plan.centroid, 0u);
}

TEST(ProtectionPlan, FullFractionProtectsWholeSubgraph) {
  const Subgraph s = twenty_node_subgraph();
  const ProtectionPlan plan = build_protection_plan(s, {1, 2, 3}, {4, 5, 6, 7}, 1.0, 1);
  EXPECT_EQ(plan.protect, as_set(s.nodes));
}

TEST(ProtectionPlan, HalfOfRemainder) {
  const Subgraph s = twenty_node_subgraph();
  const ProtectionPlan plan = build_protection_plan(s, {1, 2, 3}, {4, 5, 6, 7}, 0.5, 9);
  EXPECT_EQ(plan.protect.size(), 8u + 6u);
  for (NodeId v : plan.protect) EXPECT_TRUE(v < 8 || plan.remain.count(v));
  EXPECT_EQ(plan.protect, build_protection_plan(s, {1, 2, 3}, {4, 5, 6, 7}, 0.5, 9).protect);
}

TEST(ProtectionPlan, FloorOfFraction) {
  const Subgraph s = twenty_node_subgraph();
  // remain = 12, floor(0.3 * 12) = 3.
  EXPECT_EQ(build_protection_plan(s, {1, 2, 3}, {4, 5, 6, 7}, 0.3, 2).protect.size(), 11u);
}

TEST(ProtectionPlan, RejectsOutsideNodes) {
  const Subgraph s = twenty_node_subgraph();
  EXPECT_THROW(build_protection_plan(s, {1, 99}, {4}, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(build_protection_plan(s, {1}, {4}, 1.5, 1), std::invalid_argument);
}

TEST(BuildContext, NodeInputOnPath) {
  const Graph g = path_graph(5);
  const ContextGraph ctx = build_context(g, {2, kNoNode}, 1, kNoFanoutCap, 1);
  EXPECT_EQ(as_set(ctx.nodes), (std::set<NodeId>{1, 2, 3}));
  EXPECT_EQ(ctx.targets, std::vector<NodeId>{2});
  EXPECT_EQ(ctx.edges.size(), 2u);
  for (std::size_t i = 0; i < ctx.size(); ++i)
    for (std::size_t j = 0; j < g.feature_dim(); ++j)
      EXPECT_EQ(ctx.features.at(i, j), g.features().at(ctx.nodes[i], j));
}

TEST(BuildContext, PairInputIsUnionOfBalls) {
  const Graph g = path_graph(6);
  const ContextGraph ctx = build_context(g, {2, 3}, 1, kNoFanoutCap, 1);
  EXPECT_EQ(as_set(ctx.nodes), (std::set<NodeId>{1, 2, 3, 4}));
  EXPECT_EQ(ctx.targets, (std::vector<NodeId>{2, 3}));
  EXPECT_EQ(ctx.edges.size(), 3u);
}

TEST(BuildContext, IsolatedNodeIsSingleton) {
  const Graph g = graph_from_pairs(3, {{0, 1}});
  const ContextGraph ctx = build_context(g, {2, kNoNode}, 2, kNoFanoutCap, 1);
  EXPECT_EQ(ctx.nodes, std::vector<NodeId>{2});
  EXPECT_TRUE(ctx.edges.empty());
}

TEST(Augment, EmptyCandidateSetIsIdentity) {
  const Graph g = wheel(10);
  const ContextGraph ctx = build_context(g, {0, kNoNode}, 1, kNoFanoutCap, 1);
  const Subgraph s = khop_subgraph(g, 0, 1, kNoFanoutCap, 1);
  const ProtectionPlan plan = build_protection_plan(s, {1}, {2}, 1.0, 1);
  const ContextGraph out = augment(ctx, plan, 0.9, 0.9, 3);
  EXPECT_EQ(out.nodes, ctx.nodes);
  EXPECT_EQ(out.features, ctx.features);
  EXPECT_EQ(out.edges.size(), ctx.edges.size());
  EXPECT_TRUE(out.dropped.empty());
  EXPECT_TRUE(out.masked.empty());
}

TEST(Augment, ZeroRatesAreIdentity) {
  const Graph g = wheel(10);
  const ContextGraph ctx = build_context(g, {0, kNoNode}, 1, kNoFanoutCap, 1);
  const ContextGraph out = augment(ctx, ProtectionPlan{}, 0.0, 0.0, 3);
  EXPECT_EQ(out.nodes, ctx.nodes);
  EXPECT_EQ(out.features, ctx.features);
  EXPECT_EQ(out.edges.size(), ctx.edges.size());
}

TEST(Augment, MonteCarloDropRateAndProtectionSoundness) {
  const Graph g = wheel(30);
  const ContextGraph ctx = build_context(g, {1, kNoNode}, 2, kNoFanoutCap, 1);
  const Subgraph s = khop_subgraph(g, 0, 1, kNoFanoutCap, 1);
  const ProtectionPlan plan = build_protection_plan(s, {1, 2, 3}, {4, 5, 6, 7}, 0.3, 5);
  std::set<NodeId> candidates;
  for (NodeId v : ctx.nodes)
    if (!plan.protect.count(v) && v != 1) candidates.insert(v);
  ASSERT_GT(candidates.size(), 10u);
  double dropped = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const ContextGraph out = augment(ctx, plan, 0.5, 0.3, seed);
    dropped += static_cast<double>(out.dropped.size());
    for (NodeId v : out.dropped) {
      EXPECT_TRUE(candidates.count(v));
      EXPECT_FALSE(out.masked.count(v));
    }
    for (NodeId v : out.masked) EXPECT_TRUE(candidates.count(v));
    EXPECT_TRUE(out.contains(1));
    for (NodeId v : plan.protect) {
      if (!ctx.contains(v)) continue;
      ASSERT_TRUE(out.contains(v));
      for (std::size_t j = 0; j < g.feature_dim(); ++j)
        EXPECT_EQ(out.features.at(out.row_of(v), j), g.features().at(v, j));
    }
  }
  EXPECT_NEAR(dropped / (1000.0 * candidates.size()), 0.5, 0.05);
}

TEST(Augment, DroppedNodesLoseTheirEdges) {
  const Graph g = wheel(12);
  const ContextGraph ctx = build_context(g, {0, kNoNode}, 1, kNoFanoutCap, 1);
  const ContextGraph out = augment(ctx, ProtectionPlan{}, 0.5, 0.0, 4);
  ASSERT_FALSE(out.dropped.empty());
  for (const ContextEdge& e : out.edges) {
    EXPECT_LT(e.src, out.size());
    EXPECT_LT(e.dst, out.size());
  }
  std::size_t surviving = 0;
  for (const ContextEdge& e : ctx.edges)
    if (!out.dropped.count(ctx.nodes[e.src]) && !out.dropped.count(ctx.nodes[e.dst])) ++surviving;
  EXPECT_EQ(out.edges.size(), surviving);
}

TEST(Augment, MaskRecordsOriginalsAndRestores) {
  const Graph g = wheel(20);
  const ContextGraph ctx = build_context(g, {0, kNoNode}, 1, kNoFanoutCap, 1);
  const ContextGraph out = augment(ctx, ProtectionPlan{}, 0.0, 0.5, 6);
  ASSERT_FALSE(out.masked.empty());
  EXPECT_EQ(out.original_masked_features.size(), out.masked.size());
  for (NodeId v : out.masked) {
    for (double x : out.features.row_span(out.row_of(v))) EXPECT_EQ(x, 0.0);
  }
  EXPECT_EQ(out.restored_features(), ctx.features);
  EXPECT_FALSE(out.masked.count(0));
}

TEST(Augment, PairTargetsSurvive) {
  const Graph g = wheel(15);
  const ContextGraph ctx = build_context(g, {3, 4}, 1, kNoFanoutCap, 1);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ContextGraph out = augment(ctx, ProtectionPlan{}, 0.9, 0.9, seed);
    EXPECT_TRUE(out.contains(3) && out.contains(4));
    EXPECT_FALSE(out.masked.count(3) || out.masked.count(4));
  }
}

TEST(Augment, FullProtectionTreatsOverlapIdentically) {
  const Graph g = wheel(10);
  const Subgraph s = khop_subgraph(g, 0, 2, kNoFanoutCap, 1);
  const ProtectionPlan plan = build_protection_plan(s, {1, 2}, {3, 4}, 1.0, 1);
  const ContextGraph a = augment(build_context(g, {1, kNoNode}, 1, kNoFanoutCap, 1), plan, 0.5, 0.5, 1);
  const ContextGraph b = augment(build_context(g, {2, kNoNode}, 1, kNoFanoutCap, 1), plan, 0.5, 0.5, 2);
  EXPECT_TRUE(a.dropped.empty() && a.masked.empty());
  EXPECT_TRUE(b.dropped.empty() && b.masked.empty());
}

TEST(Augment, DeterministicInSeed) {
  const Graph g = wheel(20);
  const ContextGraph ctx = build_context(g, {0, kNoNode}, 1, kNoFanoutCap, 1);
  EXPECT_EQ(context_to_json(augment(ctx, ProtectionPlan{}, 0.3, 0.3, 8)),
            context_to_json(augment(ctx, ProtectionPlan{}, 0.3, 0.3, 8)));
  EXPECT_THROW(augment(ctx, ProtectionPlan{}, 1.3, 0.3, 8), std::invalid_argument);
}
