#pragma once

#include <span>

#include "ctp/prompt_net.hpp"

namespace ctp {

struct LossBreakdown {
  double ce = 0.0;
  double orth = 0.0;
  double attr = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

/// Mean over queries of -log softmax(logits)[truth].
Var ce_loss(Var logits, std::span<const std::size_t> truth);

/// Σ_{i≠j} (ℓ_iᵀℓ_j)² over L2-normalized rows.
Var orth_loss(Var labels);

/// Per context: mean over masked nodes of the per-node MSE. Averaged over
/// the contexts that have masked nodes; 0 when none do.
Var attr_loss(Tape& tape, std::span<const EncoderOutput> encoded);

/// ce + λ·orth + attr, with the parts recorded.
Var total_loss(Var ce, Var orth, Var attr, double lambda, LossBreakdown* breakdown = nullptr);
LossBreakdown total_loss(double ce, double orth, double attr, double lambda);

}  // namespace ctp
