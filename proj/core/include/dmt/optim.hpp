#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dmt/parameter.hpp"

namespace dmt {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  bool operator==(const AdamWHyper&) const = default;
};

/// Moments are kept per parameter in the order the parameters are passed to
/// adamw_step; that order must not change between steps.
struct AdamWState {
  AdamWHyper hyper;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One decoupled-decay Adam update over `params`, reading Parameter::grad:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// Parameters with decay == false skip the wd term. Throws when any set is
/// frozen, on shape mismatch against existing moments, and on non-finite
/// gradients (before touching anything).
void adamw_step(const std::vector<ParameterSet*>& params, AdamWState& state, double lr);

struct ScheduleConfig {
  double base_lr = 1.5e-4;
  std::size_t warmup_epochs = 15;
  std::size_t total_epochs = 300;
  std::size_t steps_per_epoch = 1;
  double floor_lr = 0.0;

  void validate() const;
  std::size_t total_steps() const { return total_epochs * steps_per_epoch; }
  std::size_t warmup_steps() const { return warmup_epochs * steps_per_epoch; }
  bool operator==(const ScheduleConfig&) const = default;
};

/// Linear warmup from 0 to base_lr, then half-cosine down to floor_lr at
/// total_steps. Valid for 0 <= step <= total_steps.
double lr_at(std::size_t global_step, const ScheduleConfig& schedule);

}  // namespace dmt
