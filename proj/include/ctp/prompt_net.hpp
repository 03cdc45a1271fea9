#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ctp/context.hpp"
#include "ctp/episode.hpp"
#include "ctp/layers.hpp"

namespace ctp {

/// Fixes every parameter shape of the prompt network.
struct ModelShape {
  std::size_t d_in = 0;
  std::size_t d = 256;
  std::size_t attn_dim = 64;
  std::size_t etype_dim = 16;
  std::size_t mlp_hidden = 256;
  double slope = 0.2;
  double logit_scale = 1.0;
};

void to_json(nlohmann::json& j, const ModelShape& s);
void from_json(const nlohmann::json& j, ModelShape& s);

inline constexpr std::size_t kPromptEdgeTypes = 3;

enum class PromptEdgeType : std::size_t { match = 0, nonmatch = 1, query = 2 };

ParamSet init_model_params(const ModelShape& shape, std::uint64_t seed,
                           Precision precision = Precision::f32);

struct EncoderOutput {
  Var nodes;    // [context x d]
  Var pooled;   // [1 x d]
  bool has_masked = false;
  Var attr_pred;       // [masked x d_in], valid when has_masked
  Tensor attr_target;  // original features of the masked nodes
};

struct EncodeOptions {
  double dropout = 0.0;
  bool training = false;
  std::uint64_t seed = 0;
};

/// One sage layer over the context; node tasks pool the target row, pair
/// inputs go through project_pair. Masked nodes get MLP reconstructions.
EncoderOutput encode_context(ParamBinding& params, const ContextGraph& ctx,
                             const EncodeOptions& opts = {});

/// h_x = Wᵀ(h_v1 ‖ h_v2 ‖ h_max) + b, where h_v1, h_v2 come from one extra
/// aggregation over the targets' neighbors and h_max is a column max.
Var project_pair(ParamBinding& params, Var node_emb, const ContextGraph& ctx);

/// Row c = mean of the example rows whose class is c.
Var init_labels(Var example_embs, std::span<const std::size_t> classes, std::size_t m);

struct PromptEdge {
  std::size_t context;  // row among examples then queries
  PromptEdgeType type;
  std::size_t label;
};

/// Node rows: examples, then queries, then one label node per class.
struct PromptGraph {
  Var nodes;
  std::size_t examples = 0;
  std::size_t queries = 0;
  std::size_t labels = 0;
  std::vector<PromptEdge> edges;

  std::size_t label_row(std::size_t c) const { return examples + queries + c; }
  /// Every prompt edge in both directions, typed.
  std::vector<TypedEdge> message_edges() const;
};

PromptGraph build_prompt_graph(Var example_embs, Var query_embs,
                               std::span<const std::size_t> example_classes, std::size_t m);

struct ScoreOutput {
  Var logits;  // [queries x m]
  Var labels;  // refined label nodes [m x d]
};

ScoreOutput refine_and_score(ParamBinding& params, const PromptGraph& pg, double logit_scale = 1.0,
                             bool refine = true);

/// Argmax per row, ties to the lowest index.
std::vector<std::size_t> predict(const Tensor& logits);

struct EpisodeForward {
  ScoreOutput scores;
  PromptGraph prompt;
  std::vector<EncoderOutput> encoded;  // support then queries
  std::vector<std::size_t> truth;      // class index per query
};

/// Encodes every context and scores the queries against the label nodes.
EpisodeForward forward_episode(ParamBinding& params, const Episode& ep,
                               std::span<const ContextGraph> support_ctx,
                               std::span<const ContextGraph> query_ctx, const ModelShape& shape,
                               const EncodeOptions& opts = {});

}  // namespace ctp
