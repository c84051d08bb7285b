#include "shortcutlab/adam.hpp"

#include <cmath>

namespace scl {

AdamState AdamState::init(const Tensor& param, const AdamHyper& hyper) {
  AdamState s;
  s.m = Tensor::zeros(param.shape);
  s.v = Tensor::zeros(param.shape);
  s.step_count = 0;
  s.hyper = hyper;
  return s;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  require_same_shape(param, grad, "adam_step");
  require_same_shape(param, state.m, "adam_step (moment)");
  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  double t = static_cast<double>(state.step_count);
  double bc1 = 1.0 - std::pow(h.beta1, t);
  double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < param.numel(); ++i) {
    double g = grad.data[i] + h.weight_decay * param.data[i];
    state.m.data[i] = h.beta1 * state.m.data[i] + (1.0 - h.beta1) * g;
    state.v.data[i] = h.beta2 * state.v.data[i] + (1.0 - h.beta2) * g * g;
    double m_hat = state.m.data[i] / bc1;
    double v_hat = state.v.data[i] / bc2;
    param.data[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
  }
}

}  // namespace scl
