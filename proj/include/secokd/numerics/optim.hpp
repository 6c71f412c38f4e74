#pragma once

#include <cstdint>
#include <vector>

#include "secokd/numerics/tensor.hpp"

namespace secokd::numerics {

struct AdamConfig {
  double lr_base = 1e-4;
  double warmup_ratio = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; 0 disables
  double grad_clip = 0.0;     // global-norm clip; 0 disables
};

// Adam with bias correction, linear warmup, and decoupled weight decay.
struct OptimState {
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  AdamConfig cfg;

  static OptimState init(const std::vector<Tensor*>& params, AdamConfig cfg);
};

// Learning rate at a step: ramps linearly from 0 over the first
// warmup_ratio * total_steps steps, then stays at lr_base.
double lr_at(const AdamConfig& cfg, std::int64_t step, std::int64_t total_steps);

// One update over aligned params/grads. Throws on shape mismatch or
// non-finite gradients (with the offending parameter index in the message).
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               OptimState& state, std::int64_t total_steps);

}  // namespace secokd::numerics
