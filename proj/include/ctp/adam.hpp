#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ctp/layers.hpp"

namespace ctp {

/// Adam with decoupled weight decay (p <- p - lr*wd*p before the moment
/// update), bias-corrected moments.
struct AdamState {
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first;
  std::map<std::string, Tensor> second;
};

void adam_step(ParamSet& params, const Grads& grads, AdamState& state);

}  // namespace ctp
