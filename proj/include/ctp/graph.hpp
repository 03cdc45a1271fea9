#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctp/tensor.hpp"

namespace ctp {

using NodeId = std::uint32_t;
using RelId = std::uint32_t;
using ClassId = std::int32_t;

inline constexpr std::size_t kNoFanoutCap = std::numeric_limits<std::size_t>::max();

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Edge {
  NodeId src;
  RelId rel;
  NodeId dst;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Incidence {
  NodeId neighbor;
  RelId rel;
  std::uint32_t edge;  // index into Graph::edges()
};

/// Typed-edge attributed graph. Immutable after construction; adjacency is
/// undirected (every edge appears in both endpoints' lists).
class Graph {
 public:
  Graph() = default;
  Graph(Tensor features, std::vector<Edge> edges, std::size_t relation_count,
        std::map<NodeId, ClassId> node_labels = {});

  std::size_t node_count() const { return features_.rows; }
  std::size_t feature_dim() const { return features_.cols; }
  std::size_t relation_count() const { return relation_count_; }
  const Tensor& features() const { return features_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::map<NodeId, ClassId>& node_labels() const { return node_labels_; }

  std::span<const Incidence> neighbors(NodeId v) const {
    return {incidence_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }

  // Original string ids from the files; defaults to decimal indices.
  std::vector<std::string> node_names;
  std::vector<std::string> relation_names;

  /// Content hash over features, edges and labels.
  std::string content_hash() const;

 private:
  Tensor features_;
  std::vector<Edge> edges_;
  std::size_t relation_count_ = 0;
  std::map<NodeId, ClassId> node_labels_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Incidence> incidence_;
};

/// h-hop neighborhood around an anchor. `nodes[0]` is the anchor; `hops`
/// is parallel to `nodes`; `edges` are indices into the parent edge list.
struct Subgraph {
  NodeId anchor = 0;
  std::vector<NodeId> nodes;
  std::vector<std::uint32_t> hops;
  std::vector<std::uint32_t> edges;

  bool contains(NodeId v) const;
};

struct RandomWalk {
  NodeId start = 0;
  std::vector<NodeId> nodes;
};

Graph load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const std::filesystem::path& dir);

Graph gen_planted_partition(std::size_t communities, std::size_t nodes_per_community, double p_in,
                            double p_out, std::size_t d_in, double feature_shift,
                            std::uint64_t seed);

/// Relation r prefers edges between one ordered pair of latent entity
/// groups; entity features carry the group mean scaled by `group_shift`.
Graph gen_relational(std::size_t entities, std::size_t relation_count, std::size_t edges,
                     std::size_t d_in, std::uint64_t seed, double group_shift = 1.5,
                     double preference = 0.8);

Subgraph khop_subgraph(const Graph& g, NodeId anchor, std::size_t h, std::size_t fanout_cap,
                       std::uint64_t seed);

std::vector<RandomWalk> sample_walks(const Graph& g, std::size_t walks_per_node,
                                     std::size_t walk_length, std::uint64_t seed);

}  // namespace ctp
