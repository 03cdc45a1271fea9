#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctp/tensor.hpp"

namespace ctp {

/// Named learnable tensors. Shapes are fixed at creation; the map keeps
/// names sorted, which is also the serialization order.
class ParamSet {
 public:
  explicit ParamSet(Precision precision = Precision::f32) : precision_(precision) {}

  void add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  Precision precision() const { return precision_; }
  std::size_t scalar_count() const;
  bool all_finite() const;

  /// Glorot-uniform init for a [fan_out x fan_in] weight.
  void add_glorot(const std::string& name, std::size_t rows, std::size_t cols, std::uint64_t seed);
  void add_zeros(const std::string& name, std::size_t rows, std::size_t cols);

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.tensors_ == b.tensors_; }

 private:
  Precision precision_;
  std::map<std::string, Tensor> tensors_;
};

using Grads = std::map<std::string, Tensor>;

/// Binds a ParamSet to a tape. Each name maps to one leaf, so repeated
/// use accumulates into the same gradient.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamSet& params) : tape_(tape), params_(params) {}

  Var operator[](const std::string& name);
  /// Gradients for every parameter in the set; zeros where unused.
  Grads grads() const;
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const ParamSet& params_;
  std::map<std::string, Var> bound_;
};

/// Message-passing structure: row `dst[e]` aggregates row `src[e]`.
struct MessageIndex {
  std::size_t nodes = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;

  /// Both directions of every undirected pair.
  static MessageIndex undirected(std::size_t nodes,
                                 std::span<const std::pair<std::size_t, std::size_t>> pairs);
};

/// out_v = act( W_self f_v + W_neigh mean_{u in N(v)} f_u ); W_* are
/// [d_out x d_in]. Nodes without neighbors get a zero neighbor term.
Var sage_layer(Var feats, const MessageIndex& adj, Var w_self, Var w_neigh, bool activate = true);

struct TypedEdge {
  std::size_t src;
  std::size_t etype;
  std::size_t dst;
};

struct AttentionWeights {
  Var w_src;     // [a x d]
  Var w_dst;     // [a x d]
  Var w_value;   // [d x d]
  Var etype;     // [types x e]
  Var score;     // [(2a + e) x 1]
  double slope = 0.2;
};

/// Single-head typed attention with a residual self term:
///   s_e   = leaky_relu(score^T [W_src h_src || W_dst h_dst || etype_e])
///   out_v = h_v + sum_{e -> v} softmax_v(s)_e * W_value h_src(e)
/// Nodes without incoming edges pass through unchanged.
Var typed_attention_layer(Var states, std::span<const TypedEdge> edges, const AttentionWeights& w);

}  // namespace ctp
