#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctp/graph.hpp"
#include "ctp/pretrain.hpp"

namespace ctp {

// ---------------------------------------------------------------------------
// k-means

struct KMeansConfig {
  std::size_t restarts = 5;
  std::size_t max_iter = 100;
  double tol = 1e-6;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Tensor means;  // [k x dim]
  double sse = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by SSE.
/// An empty cluster is re-seeded with the point farthest from its mean.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::size_t restarts, std::size_t max_iter,
                    double tol, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Centroids

struct CentroidSet {
  std::vector<NodeId> nodes;
  std::vector<bool> from_cluster;
  double alpha = 0.0;
  std::size_t k = 0;

  std::size_t size() const { return nodes.size(); }
  /// Same centroids in a seeded random order (flags follow their nodes).
  CentroidSet shuffled(std::uint64_t seed) const;
};

/// k = floor(alpha * total) cluster centers (node nearest each k-means
/// mean, next-nearest on collision), the rest uniform without replacement.
CentroidSet collect_centroids(const EmbeddingTable& emb, std::size_t total, double alpha,
                              const KMeansConfig& kmeans_cfg, std::uint64_t seed);

/// Uniform-random centroids (the non-clustered collection path).
CentroidSet random_centroids(std::size_t node_count, std::size_t total, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Episodes

enum class TaskKind { node, link };
enum class LabelMode { pseudo, truth };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// One node (node tasks) or an endpoint pair (link tasks).
struct TaskInput {
  NodeId first = kNoNode;
  NodeId second = kNoNode;

  bool is_pair() const { return second != kNoNode; }
  friend auto operator<=>(const TaskInput&, const TaskInput&) = default;
};

struct Labeled {
  TaskInput input;
  std::size_t cls;  // index into Episode::classes
};

/// Pretraining bookkeeping for one way of the episode.
struct CentroidGroup {
  NodeId centroid;
  Subgraph subgraph;
};

struct Episode {
  TaskKind kind = TaskKind::node;
  LabelMode mode = LabelMode::truth;
  std::vector<ClassId> classes;
  std::vector<Labeled> support;
  std::vector<Labeled> queries;
  std::vector<CentroidGroup> groups;  // pseudo mode only, parallel to classes
  std::uint64_t seed = 0;
  bool with_replacement = false;
  std::vector<std::string> warnings;

  std::size_t ways() const { return classes.size(); }
};

nlohmann::json episode_to_json(const Episode& ep);

struct PretrainEpisodeSpec {
  std::size_t m = 3;
  std::size_t s = 3;
  std::size_t n = 4;
  std::size_t pool = 10;
  std::size_t h = 2;
  std::size_t fanout_cap = 20;
  std::size_t retries = 5;
  TaskKind kind = TaskKind::node;
};

/// Draws the ways from pool `batch_index` of the (already shuffled)
/// centroid list and samples s + n inputs from each centroid subgraph.
/// The pseudo-class of every input is its centroid's index in the episode.
Episode sample_pretrain_episode(const Graph& g, const CentroidSet& centroids,
                                std::size_t batch_index, const PretrainEpisodeSpec& spec,
                                std::uint64_t seed);

/// True-label episode: m classes drawn uniformly from the eligible ones,
/// then k support and n query inputs per class, disjoint.
Episode sample_downstream_episode(const Graph& g, std::size_t m, std::size_t k_shots, std::size_t n,
                                  TaskKind kind, std::uint64_t seed);

}  // namespace ctp
