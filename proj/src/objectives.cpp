#include "ctp/objectives.hpp"

#include <stdexcept>

namespace ctp {

Var ce_loss(Var logits, std::span<const std::size_t> truth) {
  if (truth.size() != logits.rows()) {
    throw std::invalid_argument("ce_loss: " + std::to_string(truth.size()) + " labels for " +
                                logits.value().shape_str() + " logits");
  }
  for (std::size_t t : truth)
    if (t >= logits.cols()) throw std::out_of_range("ce_loss: class index out of range");
  return scale(mean_all(select_cols(log_softmax_rows(logits), truth)), -1.0);
}

Var orth_loss(Var labels) {
  const std::size_t m = labels.rows();
  Var l = l2_normalize_rows(labels);
  Var gram = matmul(l, transpose(l));
  Tensor off(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) off.at(i, j) = i == j ? 0.0 : 1.0;
  return sum_all(mul(square(gram), labels.tape->constant(std::move(off))));
}

Var attr_loss(Tape& tape, std::span<const EncoderOutput> encoded) {
  std::vector<Var> per_context;
  for (const EncoderOutput& e : encoded) {
    if (!e.has_masked) continue;
    // Every row has d_in entries, so the mean of per-node MSEs is the mean of all entries.
    per_context.push_back(mean_all(square(sub(e.attr_pred, tape.constant(e.attr_target)))));
  }
  if (per_context.empty()) return tape.constant(Tensor(1, 1));
  return scale(sum_all(concat_rows(per_context)), 1.0 / static_cast<double>(per_context.size()));
}

Var total_loss(Var ce, Var orth, Var attr, double lambda, LossBreakdown* breakdown) {
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
  Var total = add(add(ce, scale(orth, lambda)), attr);
  if (breakdown != nullptr) {
    breakdown->ce = ce.value().data[0];
    breakdown->orth = orth.value().data[0];
    breakdown->attr = attr.value().data[0];
    breakdown->total = total.value().data[0];
    breakdown->lambda = lambda;
  }
  return total;
}

LossBreakdown total_loss(double ce, double orth, double attr, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
  return {ce, orth, attr, ce + lambda * orth + attr, lambda};
}

}  // namespace ctp
