#include "ctp/prompt_net.hpp"

#include <stdexcept>

#include "ctp/rng.hpp"

namespace ctp {

void to_json(nlohmann::json& j, const ModelShape& s) {
  j = nlohmann::json{{"d_in", s.d_in},       {"d", s.d},
                     {"attn_dim", s.attn_dim}, {"etype_dim", s.etype_dim},
                     {"mlp_hidden", s.mlp_hidden}, {"slope", s.slope},
                     {"logit_scale", s.logit_scale}};
}

void from_json(const nlohmann::json& j, ModelShape& s) {
  const ModelShape def;
  s.d_in = j.value("d_in", def.d_in);
  s.d = j.value("d", def.d);
  s.attn_dim = j.value("attn_dim", def.attn_dim);
  s.etype_dim = j.value("etype_dim", def.etype_dim);
  s.mlp_hidden = j.value("mlp_hidden", def.mlp_hidden);
  s.slope = j.value("slope", def.slope);
  s.logit_scale = j.value("logit_scale", def.logit_scale);
}

ParamSet init_model_params(const ModelShape& s, std::uint64_t seed, Precision precision) {
  if (s.d_in == 0 || s.d == 0) throw std::invalid_argument("init_model_params: zero dimension");
  ParamSet p(precision);
  std::uint64_t k = 0;
  auto glorot = [&](const std::string& name, std::size_t r, std::size_t c) {
    p.add_glorot(name, r, c, derive_seed(seed, {++k}));
  };
  glorot("init.w_self", s.d, s.d_in);
  glorot("init.w_neigh", s.d, s.d_in);
  glorot("pair.agg.w_self", s.d, s.d);
  glorot("pair.agg.w_neigh", s.d, s.d);
  glorot("pair.proj.w", 3 * s.d, s.d);
  p.add_zeros("pair.proj.b", 1, s.d);
  glorot("ref.w_src", s.attn_dim, s.d);
  glorot("ref.w_dst", s.attn_dim, s.d);
  glorot("ref.w_value", s.d, s.d);
  glorot("ref.etype", kPromptEdgeTypes, s.etype_dim);
  glorot("ref.score", 2 * s.attn_dim + s.etype_dim, 1);
  glorot("attr.w1", s.mlp_hidden, s.d);
  p.add_zeros("attr.b1", 1, s.mlp_hidden);
  glorot("attr.w2", s.d_in, s.mlp_hidden);
  p.add_zeros("attr.b2", 1, s.d_in);
  return p;
}

namespace {

MessageIndex context_messages(const ContextGraph& ctx) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(ctx.edges.size());
  for (const ContextEdge& e : ctx.edges) pairs.emplace_back(e.src, e.dst);
  return MessageIndex::undirected(ctx.size(), pairs);
}

Var mlp_reconstruct(ParamBinding& params, Var rows) {
  Var h = relu(add_row(matmul(rows, transpose(params["attr.w1"])), params["attr.b1"]));
  return add_row(matmul(h, transpose(params["attr.w2"])), params["attr.b2"]);
}

}  // namespace

Var project_pair(ParamBinding& params, Var node_emb, const ContextGraph& ctx) {
  if (ctx.targets.size() != 2) {
    throw std::invalid_argument("project_pair: expected 2 targets, got " + std::to_string(ctx.targets.size()));
  }
  const std::vector<std::size_t> trows = ctx.target_rows();
  std::vector<std::size_t> src, dst;
  for (const ContextEdge& e : ctx.edges) {
    for (std::size_t t = 0; t < 2; ++t) {
      if (e.dst == trows[t]) {
        src.push_back(e.src);
        dst.push_back(t);
      }
      if (e.src == trows[t]) {
        src.push_back(e.dst);
        dst.push_back(t);
      }
    }
  }
  Var agg = matmul(gather_rows(node_emb, trows), transpose(params["pair.agg.w_self"]));
  if (!src.empty()) {
    agg = add(agg, matmul(scatter_mean(node_emb, src, dst, 2), transpose(params["pair.agg.w_neigh"])));
  }
  agg = relu(agg);
  const std::size_t r0[] = {0};
  const std::size_t r1[] = {1};
  const Var parts[] = {gather_rows(agg, r0), gather_rows(agg, r1), max_rows(node_emb)};
  return add(matmul(concat_cols(parts), params["pair.proj.w"]), params["pair.proj.b"]);
}

EncoderOutput encode_context(ParamBinding& params, const ContextGraph& ctx, const EncodeOptions& opts) {
  Tape& tape = params.tape();
  Var feats = tape.constant(ctx.features);
  if (opts.training && opts.dropout > 0.0) feats = dropout(feats, opts.dropout, opts.seed, true);
  EncoderOutput out;
  out.nodes = sage_layer(feats, context_messages(ctx), params["init.w_self"], params["init.w_neigh"]);
  if (ctx.targets.size() == 1) {
    const std::size_t row[] = {ctx.row_of(ctx.targets[0])};
    out.pooled = gather_rows(out.nodes, row);
  } else {
    out.pooled = project_pair(params, out.nodes, ctx);
  }
  if (!ctx.masked.empty()) {
    out.has_masked = true;
    out.attr_pred = mlp_reconstruct(params, gather_rows(out.nodes, ctx.masked_rows()));
    out.attr_target = Tensor(ctx.masked.size(), ctx.features.cols);
    std::size_t i = 0;
    for (NodeId v : ctx.masked) {
      const auto& orig = ctx.original_masked_features.at(v);
      std::copy(orig.begin(), orig.end(), out.attr_target.row_span(i++).begin());
    }
  }
  return out;
}

Var init_labels(Var example_embs, std::span<const std::size_t> classes, std::size_t m) {
  if (classes.size() != example_embs.rows()) {
    throw std::invalid_argument("init_labels: " + std::to_string(classes.size()) + " classes for " +
                                example_embs.value().shape_str());
  }
  std::vector<std::size_t> count(m, 0);
  std::vector<std::size_t> src(classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= m) throw std::out_of_range("init_labels: class index out of range");
    ++count[classes[i]];
    src[i] = i;
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (count[c] == 0) throw std::invalid_argument("init_labels: class " + std::to_string(c) + " has no examples");
  }
  return scatter_mean(example_embs, src, classes, m);
}

std::vector<TypedEdge> PromptGraph::message_edges() const {
  std::vector<TypedEdge> out;
  out.reserve(edges.size() * 2);
  for (const PromptEdge& e : edges) {
    const auto t = static_cast<std::size_t>(e.type);
    out.push_back({e.context, t, label_row(e.label)});
    out.push_back({label_row(e.label), t, e.context});
  }
  return out;
}

PromptGraph build_prompt_graph(Var example_embs, Var query_embs,
                               std::span<const std::size_t> example_classes, std::size_t m) {
  if (example_embs.cols() != query_embs.cols()) {
    throw std::invalid_argument("build_prompt_graph: example/query widths differ " +
                                example_embs.value().shape_str() + " vs " + query_embs.value().shape_str());
  }
  PromptGraph pg;
  pg.examples = example_embs.rows();
  pg.queries = query_embs.rows();
  pg.labels = m;
  Var labels = init_labels(example_embs, example_classes, m);
  const Var parts[] = {example_embs, query_embs, labels};
  pg.nodes = concat_rows(parts);
  for (std::size_t i = 0; i < pg.examples; ++i)
    for (std::size_t c = 0; c < m; ++c)
      pg.edges.push_back({i, c == example_classes[i] ? PromptEdgeType::match : PromptEdgeType::nonmatch, c});
  for (std::size_t j = 0; j < pg.queries; ++j)
    for (std::size_t c = 0; c < m; ++c) pg.edges.push_back({pg.examples + j, PromptEdgeType::query, c});
  return pg;
}

ScoreOutput refine_and_score(ParamBinding& params, const PromptGraph& pg, double logit_scale, bool refine) {
  Var states = pg.nodes;
  if (refine) {
    AttentionWeights w{params["ref.w_src"], params["ref.w_dst"], params["ref.w_value"],
                       params["ref.etype"], params["ref.score"]};
    const auto edges = pg.message_edges();
    states = typed_attention_layer(states, edges, w);
  }
  std::vector<std::size_t> qrows(pg.queries), lrows(pg.labels);
  for (std::size_t j = 0; j < pg.queries; ++j) qrows[j] = pg.examples + j;
  for (std::size_t c = 0; c < pg.labels; ++c) lrows[c] = pg.label_row(c);
  ScoreOutput out;
  out.labels = gather_rows(states, lrows);
  out.logits = cosine_sim(gather_rows(states, qrows), out.labels);
  if (logit_scale != 1.0) out.logits = scale(out.logits, logit_scale);
  return out;
}

std::vector<std::size_t> predict(const Tensor& logits) {
  std::vector<std::size_t> out(logits.rows, 0);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    for (std::size_t c = 1; c < logits.cols; ++c)
      if (logits.at(i, c) > logits.at(i, out[i])) out[i] = c;
  }
  return out;
}

EpisodeForward forward_episode(ParamBinding& params, const Episode& ep,
                               std::span<const ContextGraph> support_ctx,
                               std::span<const ContextGraph> query_ctx, const ModelShape& shape,
                               const EncodeOptions& opts) {
  if (support_ctx.size() != ep.support.size() || query_ctx.size() != ep.queries.size()) {
    throw std::invalid_argument("forward_episode: context count does not match episode");
  }
  EpisodeForward fw;
  std::vector<Var> ex, qu;
  std::vector<std::size_t> ex_classes;
  std::size_t i = 0;
  for (const ContextGraph& ctx : support_ctx) {
    EncodeOptions o = opts;
    o.seed = derive_seed(opts.seed, {i++});
    fw.encoded.push_back(encode_context(params, ctx, o));
    ex.push_back(fw.encoded.back().pooled);
  }
  for (const ContextGraph& ctx : query_ctx) {
    EncodeOptions o = opts;
    o.seed = derive_seed(opts.seed, {i++});
    fw.encoded.push_back(encode_context(params, ctx, o));
    qu.push_back(fw.encoded.back().pooled);
  }
  for (const Labeled& l : ep.support) ex_classes.push_back(l.cls);
  for (const Labeled& l : ep.queries) fw.truth.push_back(l.cls);
  fw.prompt = build_prompt_graph(concat_rows(ex), concat_rows(qu), ex_classes, ep.ways());
  fw.scores = refine_and_score(params, fw.prompt, shape.logit_scale);
  return fw;
}

}  // namespace ctp
