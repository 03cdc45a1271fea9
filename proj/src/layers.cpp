#include "ctp/layers.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ctp {

void ParamSet::add(const std::string& name, Tensor value) {
  if (tensors_.count(name) != 0) throw std::invalid_argument("ParamSet: duplicate name " + name);
  if (!value.all_finite()) throw NumericError("ParamSet: non-finite init for " + name);
  round_to_precision(value, precision_);
  tensors_.emplace(name, std::move(value));
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("ParamSet: unknown parameter " + name);
  return it->second;
}

Tensor& ParamSet::get_mut(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("ParamSet: unknown parameter " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& [_, t] : tensors_)
    if (!t.all_finite()) return false;
  return true;
}

void ParamSet::add_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (double& v : t.data) v = dist(rng);
  add(name, std::move(t));
}

void ParamSet::add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
  add(name, Tensor(rows, cols));
}

Var ParamBinding::operator[](const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.leaf(params_.get(name));
  bound_.emplace(name, v);
  return v;
}

Grads ParamBinding::grads() const {
  Grads out;
  for (const auto& [name, t] : params_.tensors()) {
    auto it = bound_.find(name);
    out.emplace(name, it == bound_.end() ? Tensor(t.rows, t.cols) : tape_.grad(it->second));
  }
  return out;
}

MessageIndex MessageIndex::undirected(std::size_t nodes,
                                      std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  MessageIndex m;
  m.nodes = nodes;
  m.src.reserve(pairs.size() * 2);
  m.dst.reserve(pairs.size() * 2);
  for (const auto& [a, b] : pairs) {
    if (a >= nodes || b >= nodes) throw std::out_of_range("MessageIndex: endpoint out of range");
    m.src.push_back(a);
    m.dst.push_back(b);
    m.src.push_back(b);
    m.dst.push_back(a);
  }
  return m;
}

Var sage_layer(Var feats, const MessageIndex& adj, Var w_self, Var w_neigh, bool activate) {
  const Tensor& F = feats.value();
  if (F.rows != adj.nodes) {
    throw std::invalid_argument("sage_layer: " + std::to_string(adj.nodes) +
                                "-node adjacency for features " + F.shape_str());
  }
  if (w_self.cols() != F.cols || w_neigh.cols() != F.cols || w_self.rows() != w_neigh.rows()) {
    throw std::invalid_argument("sage_layer: weight shapes " + w_self.value().shape_str() + ", " +
                                w_neigh.value().shape_str() + " do not fit features " +
                                F.shape_str());
  }
  Var self_term = matmul(feats, transpose(w_self));
  Var out = self_term;
  if (!adj.src.empty()) {
    Var neigh = scatter_mean(feats, adj.src, adj.dst, adj.nodes);
    out = add(self_term, matmul(neigh, transpose(w_neigh)));
  }
  return activate ? relu(out) : out;
}

Var typed_attention_layer(Var states, std::span<const TypedEdge> edges, const AttentionWeights& w) {
  const std::size_t n = states.rows();
  const std::size_t types = w.etype.rows();
  for (const TypedEdge& e : edges) {
    if (e.etype >= types) {
      throw std::invalid_argument("typed_attention_layer: unknown edge type " +
                                  std::to_string(e.etype));
    }
    if (e.src >= n || e.dst >= n) throw std::out_of_range("typed_attention_layer: bad endpoint");
  }
  if (edges.empty()) return states;

  std::vector<std::size_t> src, dst, et;
  src.reserve(edges.size());
  dst.reserve(edges.size());
  et.reserve(edges.size());
  for (const TypedEdge& e : edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
    et.push_back(e.etype);
  }

  Var proj_src = matmul(states, transpose(w.w_src));
  Var proj_dst = matmul(states, transpose(w.w_dst));
  Var values = matmul(states, transpose(w.w_value));

  const Var parts[] = {gather_rows(proj_src, src), gather_rows(proj_dst, dst),
                       gather_rows(w.etype, et)};
  Var scores = leaky_relu(matmul(concat_cols(parts), w.score), w.slope);
  Var alpha = segment_softmax(scores, dst, n);
  Var messages = scale_rows(gather_rows(values, src), alpha);
  return add(states, scatter_sum(messages, dst, n));
}

}  // namespace ctp
