#include "secokd/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace secokd::numerics {

OptimState OptimState::init(const std::vector<Tensor*>& params, AdamConfig cfg) {
  OptimState s;
  s.cfg = cfg;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (const Tensor* p : params) {
    s.first_moment.push_back(Tensor::zeros(p->shape));
    s.second_moment.push_back(Tensor::zeros(p->shape));
  }
  return s;
}

double lr_at(const AdamConfig& cfg, std::int64_t step, std::int64_t total_steps) {
  const auto warmup_steps =
      static_cast<std::int64_t>(cfg.warmup_ratio * static_cast<double>(total_steps));
  if (warmup_steps <= 0 || step >= warmup_steps) return cfg.lr_base;
  return cfg.lr_base * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               OptimState& state, std::int64_t total_steps) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: params/grads/state size mismatch");
  }
  if (state.step >= total_steps) {
    throw std::invalid_argument("adam_step: step " + std::to_string(state.step) +
                                " past total_steps " + std::to_string(total_steps));
  }
  const AdamConfig& cfg = state.cfg;
  const double lr = lr_at(cfg, state.step, total_steps);
  const double t = static_cast<double>(state.step) + 1.0;
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  double clip_scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const Tensor* g : grads) {
      for (double v : g->data) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
  }

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const Tensor& g = *grads[pi];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape) +
                                  " does not match parameter shape " + shape_str(p.shape) +
                                  " at index " + std::to_string(pi));
    }
    if (!g.all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient for parameter index " +
                               std::to_string(pi) + " at step " + std::to_string(state.step));
    }
    Tensor& m = state.first_moment[pi];
    Tensor& v = state.second_moment[pi];
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i] * clip_scale;
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.data[i] / bias1;
      const double vhat = v.data[i] / bias2;
      p.data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.data[i]);
    }
  }
  state.step += 1;
}

}  // namespace secokd::numerics
