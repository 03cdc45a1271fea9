#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctp/graph.hpp"
#include "ctp/layers.hpp"

namespace ctp {

struct PretrainConfig {
  std::size_t d = 256;
  std::size_t epochs = 2;
  std::size_t walks_per_node = 5;
  std::size_t walk_length = 8;
  std::size_t window = 2;
  std::size_t negatives = 5;
  double pn_power = 0.75;
  double lr = 0.01;
  double weight_decay = 0.0;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

/// Node embeddings produced by the pretraining GNN.
struct EmbeddingTable {
  Tensor table;
  std::string graph_hash;
  std::string config_hash;

  std::size_t dim() const { return table.cols; }
};

struct PairEntry {
  NodeId u;
  NodeId positive;
  std::vector<NodeId> negatives;
};

struct PairBatch {
  std::vector<PairEntry> entries;
};

/// Ordered co-occurrence pairs within `window` of every walk, each with
/// `negatives` draws from P_n(v) ∝ degree(v)^pn_power. Entries are shuffled
/// and cut into batches of `batch_size` (0 = one batch).
std::vector<PairBatch> build_pair_batches(std::span<const RandomWalk> walks, std::size_t window,
                                          std::size_t negatives, double pn_power,
                                          std::span<const std::size_t> degrees, std::uint64_t seed,
                                          std::size_t batch_size = 0);

/// Mean over entries of  -log σ(h_u·h_v) - Σ_n log σ(-h_u·h_n).
/// The sum over the Q negatives equals Q times their empirical mean.
Var skipgram_loss(Var emb, const PairBatch& batch);
double skipgram_loss(const EmbeddingTable& emb, const PairBatch& batch);

ParamSet init_pretrain_params(std::size_t d_in, std::size_t d, std::uint64_t seed,
                              Precision precision = Precision::f32);
MessageIndex graph_message_index(const Graph& g);
/// Two sage layers; the second is linear.
Var pretrain_forward(ParamBinding& params, Var feats, const MessageIndex& adj);

struct PretrainResult {
  EmbeddingTable embeddings;
  std::vector<double> step_losses;
  /// Set when 10-step block means of the first 50 steps fail to decrease.
  bool loss_flagged = false;
};

PretrainResult pretrain(const Graph& g, const PretrainConfig& cfg);

/// pretrain() behind an on-disk cache keyed by (graph hash, config hash).
EmbeddingTable pretrain_cached(const Graph& g, const PretrainConfig& cfg,
                               const std::filesystem::path& cache_dir);

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& emb);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace ctp
