#include "dmt/optim.hpp"

#include <cmath>
#include <numbers>

#include "dmt/errors.hpp"

namespace dmt {

void adamw_step(const std::vector<ParameterSet*>& params, AdamWState& state, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("adamw_step: learning rate must be finite and >= 0");
  std::vector<Parameter*> flat;
  for (ParameterSet* set : params) {
    if (set->frozen()) throw InvalidArgument("adamw_step: refusing to update a frozen parameter set");
    for (auto& p : set->items()) flat.push_back(&p);
  }
  if (state.m.empty() && state.v.empty()) {
    for (Parameter* p : flat) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != flat.size() || state.v.size() != flat.size()) {
    throw ShapeError("adamw_step: optimizer state holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(flat.size()) + " parameters");
  }
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const Parameter& p = *flat[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
        state.v[i].shape() != p.value.shape()) {
      throw ShapeError("adamw_step: shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) throw NumericError("adamw_step: non-finite gradient in " + p.name);
  }

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    Parameter& p = *flat[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const double wd = p.decay ? h.weight_decay : 0.0;
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad[k];
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      p.value[k] -= lr * (m_hat / (std::sqrt(v_hat) + h.eps) + wd * p.value[k]);
    }
  }
}

void ScheduleConfig::validate() const {
  if (!(base_lr >= 0.0) || !(floor_lr >= 0.0)) throw ConfigError("schedule: learning rates must be >= 0");
  if (total_epochs > 0 && warmup_epochs >= total_epochs) {
    throw ConfigError("schedule: warmup_epochs must be smaller than total_epochs");
  }
  if (steps_per_epoch == 0) throw ConfigError("schedule: steps_per_epoch must be positive");
}

double lr_at(std::size_t global_step, const ScheduleConfig& schedule) {
  schedule.validate();
  const std::size_t total = schedule.total_steps();
  if (global_step > total) {
    throw InvalidArgument("lr_at: step " + std::to_string(global_step) + " beyond the " + std::to_string(total) +
                          "-step schedule");
  }
  const std::size_t warmup = schedule.warmup_steps();
  if (global_step < warmup) {
    return schedule.base_lr * static_cast<double>(global_step) / static_cast<double>(warmup);
  }
  const std::size_t decay_steps = total - warmup;
  const double progress =
      decay_steps == 0 ? 1.0 : static_cast<double>(global_step - warmup) / static_cast<double>(decay_steps);
  return schedule.floor_lr +
         0.5 * (schedule.base_lr - schedule.floor_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace dmt
