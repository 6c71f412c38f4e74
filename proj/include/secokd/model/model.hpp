#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "secokd/model/config.hpp"
#include "secokd/numerics/rng.hpp"
#include "secokd/numerics/tensor.hpp"

namespace secokd::model {

struct Parameter {
  std::string name;
  numerics::Tensor tensor;
};

// A decoder-only transformer with learned absolute position embeddings and,
// optionally, low-rank adapters on the attention projections. Without
// adapters the base parameters are trainable (pretraining); attach_lora
// freezes the base and adds the only trainable tensors.
struct AdaptedModel {
  TransformerConfig config;
  std::optional<LoraConfig> lora;
  std::vector<Parameter> base;
  std::vector<Parameter> adapters;

  double lora_scaling() const { return lora ? lora->scaling() : 0.0; }

  const numerics::Tensor& param(const std::string& name) const;
  numerics::Tensor* find(const std::string& name);
  const numerics::Tensor* find(const std::string& name) const;

  // Trainable tensors in a fixed, name-stable order.
  std::vector<numerics::Tensor*> trainable_params();
  std::vector<const numerics::Tensor*> trainable_params() const;

  std::int64_t total_param_count() const;
  std::int64_t trainable_param_count() const;
};

// Fresh base model, all parameters trainable, weights from a small Gaussian
// under the seed, layer-norm gains 1 and biases 0.
AdaptedModel init_base_model(const TransformerConfig& config, std::uint64_t seed);

// Returns a copy of `base_model` with its base frozen and zero-initialized
// adapters attached: A from a small Gaussian under the seed, B zero, so the
// adapted model's logits equal the base model's on every input.
AdaptedModel attach_lora(const AdaptedModel& base_model, const LoraConfig& cfg,
                         std::uint64_t seed);

void set_base_trainable(AdaptedModel& m, bool trainable);

// trainable parameter count / total parameter count (base + adapters).
double trainable_fraction(const AdaptedModel& m);

}  // namespace secokd::model
