#include <cmath>

#include "entmlm/errors.hpp"
#include "entmlm/training.hpp"

namespace entmlm {

double lr_at(std::size_t step, std::size_t total_steps, double peak, double warmup_fraction) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double warmup = warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warmup) return peak * s / warmup;
  return peak * (static_cast<double>(total_steps) - s) / (static_cast<double>(total_steps) - warmup);
}

void optimizer_step(std::span<Parameter* const> params, AdamState& state, double lr,
                    double weight_decay, const AdamWConfig& adam) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw NumericalError("non-finite gradient in " + p->name);
  }
  if (state.m.size() != params.size()) {
    if (!state.m.empty()) throw ContractViolation("optimizer state does not match parameter list");
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!state.m[i].same_shape(p.value)) throw ContractViolation("optimizer state shape mismatch for " + p.name);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const double decay = p.decay ? weight_decay : 0.0;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * g;
      v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * g * g;
      const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + adam.eps);
      p.value[k] -= lr * (update + decay * p.value[k]);
    }
  }
}

}  // namespace entmlm
