#include "ctp/context.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ctp/rng.hpp"

namespace ctp {

std::size_t ContextGraph::row_of(NodeId v) const {
  auto it = index_.find(v);
  if (it == index_.end()) throw std::out_of_range("context has no node " + std::to_string(v));
  return it->second;
}

std::vector<std::size_t> ContextGraph::target_rows() const {
  std::vector<std::size_t> rows;
  for (NodeId t : targets) rows.push_back(row_of(t));
  return rows;
}

std::vector<std::size_t> ContextGraph::masked_rows() const {
  std::vector<std::size_t> rows;
  for (NodeId v : masked) rows.push_back(row_of(v));
  return rows;
}

Tensor ContextGraph::restored_features() const {
  Tensor out = features;
  for (const auto& [v, orig] : original_masked_features)
    std::copy(orig.begin(), orig.end(), out.row_span(row_of(v)).begin());
  return out;
}

std::size_t ContextGraph::add_node(NodeId v) {
  auto [it, fresh] = index_.emplace(v, nodes.size());
  if (fresh) nodes.push_back(v);
  return it->second;
}

void ContextGraph::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) index_.emplace(nodes[i], i);
}

ProtectionPlan build_protection_plan(const Subgraph& g_o, const std::set<NodeId>& examples,
                                     const std::set<NodeId>& queries, double p, std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("build_protection_plan: p must be in [0,1]");
  const std::set<NodeId> members(g_o.nodes.begin(), g_o.nodes.end());
  for (const auto* part : {&examples, &queries}) {
    for (NodeId v : *part) {
      if (members.count(v) == 0) {
        throw std::invalid_argument("build_protection_plan: node " + std::to_string(v) +
                                    " is not in the centroid subgraph");
      }
    }
  }
  ProtectionPlan plan;
  plan.centroid = g_o.anchor;
  plan.p = p;
  plan.protect.insert(g_o.anchor);
  plan.protect.insert(examples.begin(), examples.end());
  plan.protect.insert(queries.begin(), queries.end());
  for (NodeId v : g_o.nodes)
    if (plan.protect.count(v) == 0) plan.remain.insert(v);
  const auto keep = static_cast<std::size_t>(std::floor(p * static_cast<double>(plan.remain.size())));
  Rng rng(seed);
  for (NodeId v : sample_without_replacement(std::vector<NodeId>(plan.remain.begin(), plan.remain.end()), keep, rng)) {
    plan.protect.insert(v);
  }
  return plan;
}

ContextGraph build_context(const Graph& g, const TaskInput& x, std::size_t h, std::size_t fanout_cap,
                           std::uint64_t seed) {
  ContextGraph ctx;
  std::vector<Subgraph> parts;
  parts.push_back(khop_subgraph(g, x.first, h, fanout_cap, derive_seed(seed, {0})));
  ctx.targets.push_back(x.first);
  if (x.is_pair()) {
    if (x.second == x.first) throw std::invalid_argument("build_context: pair input with equal endpoints");
    parts.push_back(khop_subgraph(g, x.second, h, fanout_cap, derive_seed(seed, {1})));
    ctx.targets.push_back(x.second);
  }
  for (const Subgraph& s : parts) {
    for (NodeId v : s.nodes) ctx.add_node(v);
  }
  std::set<std::uint32_t> seen;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i) {
    for (const Incidence& inc : g.neighbors(ctx.nodes[i])) {
      if (!ctx.contains(inc.neighbor) || !seen.insert(inc.edge).second) continue;
      const Edge& e = g.edges()[inc.edge];
      ctx.edges.push_back({ctx.row_of(e.src), ctx.row_of(e.dst), e.rel});
    }
  }
  ctx.features = Tensor(ctx.nodes.size(), g.feature_dim());
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i) {
    const auto src = g.features().row_span(ctx.nodes[i]);
    std::copy(src.begin(), src.end(), ctx.features.row_span(i).begin());
  }
  return ctx;
}

ContextGraph augment(const ContextGraph& ctx, const ProtectionPlan& plan, double drop_rate,
                     double mask_rate, std::uint64_t seed) {
  if (drop_rate < 0.0 || drop_rate > 1.0 || mask_rate < 0.0 || mask_rate > 1.0) {
    throw std::invalid_argument("augment: rates must be in [0,1]");
  }
  const std::set<NodeId> targets(ctx.targets.begin(), ctx.targets.end());
  Rng rng(seed);
  std::bernoulli_distribution drop(drop_rate);
  std::bernoulli_distribution mask(mask_rate);

  std::vector<bool> is_candidate(ctx.size(), false);
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    const NodeId v = ctx.nodes[i];
    is_candidate[i] = plan.protect.count(v) == 0 && targets.count(v) == 0 && ctx.dropped.count(v) == 0 &&
                      ctx.masked.count(v) == 0;
  }
  std::vector<bool> dropped(ctx.size(), false);
  for (std::size_t i = 0; i < ctx.size(); ++i)
    if (is_candidate[i] && drop(rng)) dropped[i] = true;
  std::vector<bool> masked(ctx.size(), false);
  for (std::size_t i = 0; i < ctx.size(); ++i)
    if (is_candidate[i] && !dropped[i] && mask(rng)) masked[i] = true;

  ContextGraph out;
  out.targets = ctx.targets;
  out.dropped = ctx.dropped;
  out.masked = ctx.masked;
  out.original_masked_features = ctx.original_masked_features;
  std::vector<std::size_t> new_row(ctx.size(), 0);
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (dropped[i]) {
      out.dropped.insert(ctx.nodes[i]);
      continue;
    }
    new_row[i] = out.nodes.size();
    out.nodes.push_back(ctx.nodes[i]);
  }
  out.reindex();
  for (const ContextEdge& e : ctx.edges) {
    if (dropped[e.src] || dropped[e.dst]) continue;
    out.edges.push_back({new_row[e.src], new_row[e.dst], e.rel});
  }
  out.features = Tensor(out.nodes.size(), ctx.features.cols);
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (dropped[i]) continue;
    const auto src = ctx.features.row_span(i);
    auto dst = out.features.row_span(new_row[i]);
    if (masked[i]) {
      out.masked.insert(ctx.nodes[i]);
      out.original_masked_features.emplace(ctx.nodes[i], std::vector<double>(src.begin(), src.end()));
      std::fill(dst.begin(), dst.end(), 0.0);
    } else {
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

nlohmann::json context_to_json(const ContextGraph& ctx) {
  nlohmann::json edges = nlohmann::json::array();
  for (const ContextEdge& e : ctx.edges) edges.push_back({ctx.nodes[e.src], e.rel, ctx.nodes[e.dst]});
  return {{"nodes", ctx.nodes},
          {"edges", edges},
          {"targets", ctx.targets},
          {"dropped", ctx.dropped},
          {"masked", ctx.masked}};
}

}  // namespace ctp
