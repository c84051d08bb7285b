#pragma once

#include <cstdint>
#include <vector>

#include "shortcutlab/tensor.hpp"

namespace scl {

struct AdamHyper {
  double learning_rate = 0.01;
  double beta1 = 0.9;    // not reported with the rest of the recipe; surfaced in configs
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-5;
};

/// Optimizer state for a single parameter tensor.
struct AdamState {
  Tensor m, v;
  std::int64_t step_count = 0;
  AdamHyper hyper;

  static AdamState init(const Tensor& param, const AdamHyper& hyper);
};

/// One Adam update with bias correction. Weight decay enters as an additive
/// L2 gradient term (classical Adam + L2, not decoupled) before the moment
/// updates.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

}  // namespace scl
