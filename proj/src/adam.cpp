#include "ctp/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ctp {

void adam_step(ParamSet& params, const Grads& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    if (!params.get(name).same_shape(g)) {
      throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() + " for " + name +
                                  " " + params.get(name).shape_str());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  for (const auto& [name, value] : params.tensors()) {
    Tensor& p = params.get_mut(name);
    auto [m_it, m_new] = state.first.try_emplace(name, p.rows, p.cols);
    auto [v_it, v_new] = state.second.try_emplace(name, p.rows, p.cols);
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (!m.same_shape(p) || !v.same_shape(p)) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + name);
    }
    auto git = grads.find(name);
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? g->data[i] : 0.0;
      p.data[i] -= state.lr * state.weight_decay * p.data[i];
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.data[i] / c1;
      const double vhat = v.data[i] / c2;
      p.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    round_to_precision(p, params.precision());
    if (!p.all_finite()) throw NumericError("adam_step: non-finite parameter " + name);
  }
}

}  // namespace ctp
