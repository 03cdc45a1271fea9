#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ctp/episode.hpp"
#include "ctp/graph.hpp"

namespace ctp {

struct ContextEdge {
  std::size_t src;  // local row
  std::size_t dst;  // local row
  RelId rel;
};

/// Neighborhood of one task input with a local feature copy. Augmentation
/// removes dropped nodes and zeroes masked rows, keeping the originals.
struct ContextGraph {
  std::vector<NodeId> nodes;
  std::vector<ContextEdge> edges;
  std::vector<NodeId> targets;
  Tensor features;
  std::set<NodeId> dropped;
  std::set<NodeId> masked;
  std::map<NodeId, std::vector<double>> original_masked_features;

  std::size_t size() const { return nodes.size(); }
  bool contains(NodeId v) const { return index_.count(v) != 0; }
  std::size_t row_of(NodeId v) const;
  std::vector<std::size_t> target_rows() const;
  std::vector<std::size_t> masked_rows() const;  // ascending node-id order
  /// Features with masked rows restored from the recorded originals.
  Tensor restored_features() const;

  void reindex();
  /// Appends a node (no-op if present) and returns its row.
  std::size_t add_node(NodeId v);

 private:
  std::unordered_map<NodeId, std::size_t> index_;
};

struct ProtectionPlan {
  NodeId centroid = kNoNode;
  std::set<NodeId> protect;
  std::set<NodeId> remain;
  double p = 0.0;
};

/// protect = {o} ∪ examples ∪ queries ∪ V^(p), where V^(p) is a uniform
/// floor(p·|remain|)-subset of remain = V_o \ ({o} ∪ examples ∪ queries).
ProtectionPlan build_protection_plan(const Subgraph& g_o, const std::set<NodeId>& examples,
                                     const std::set<NodeId>& queries, double p, std::uint64_t seed);

/// Node input: h-hop subgraph. Pair input: union of both endpoints'
/// subgraphs with edges induced on the union.
ContextGraph build_context(const Graph& g, const TaskInput& x, std::size_t h, std::size_t fanout_cap,
                           std::uint64_t seed);

/// Drops each candidate with `drop_rate`, then masks each surviving
/// candidate with `mask_rate`. Candidates exclude plan.protect and targets.
ContextGraph augment(const ContextGraph& ctx, const ProtectionPlan& plan, double drop_rate,
                     double mask_rate, std::uint64_t seed);

nlohmann::json context_to_json(const ContextGraph& ctx);

}  // namespace ctp
