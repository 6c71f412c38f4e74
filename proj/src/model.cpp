#include "secokd/model/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace secokd::model {

using numerics::Rng;
using numerics::Tensor;

void TransformerConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("TransformerConfig: vocab_size must be > 0");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_seq_len <= 0) {
    throw std::invalid_argument("TransformerConfig: dimensions must be > 0");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("TransformerConfig: d_model must be divisible by n_heads");
  }
}

void LoraConfig::validate() const {
  if (rank < 1) throw std::invalid_argument("LoraConfig: rank must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("LoraConfig: dropout must be in [0, 1)");
  }
  if (target_modules.empty()) {
    throw std::invalid_argument("LoraConfig: target_modules must be nonempty");
  }
  for (const auto& t : target_modules) {
    const auto& known = lora_targetable_modules();
    if (std::find(known.begin(), known.end(), t) == known.end()) {
      throw std::invalid_argument("LoraConfig: unknown target module name '" + t + "'");
    }
  }
}

const std::vector<std::string>& lora_targetable_modules() {
  static const std::vector<std::string> mods = {"q_proj", "k_proj", "v_proj", "out_proj"};
  return mods;
}

const Tensor& AdaptedModel::param(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw std::invalid_argument("AdaptedModel: no parameter named '" + name + "'");
  return *t;
}

numerics::Tensor* AdaptedModel::find(const std::string& name) {
  for (auto& p : base) {
    if (p.name == name) return &p.tensor;
  }
  for (auto& p : adapters) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

const numerics::Tensor* AdaptedModel::find(const std::string& name) const {
  return const_cast<AdaptedModel*>(this)->find(name);
}

std::vector<numerics::Tensor*> AdaptedModel::trainable_params() {
  std::vector<Tensor*> out;
  for (auto& p : base) {
    if (p.tensor.requires_grad) out.push_back(&p.tensor);
  }
  for (auto& p : adapters) {
    if (p.tensor.requires_grad) out.push_back(&p.tensor);
  }
  return out;
}

std::vector<const numerics::Tensor*> AdaptedModel::trainable_params() const {
  std::vector<const Tensor*> out;
  for (const auto& p : base) {
    if (p.tensor.requires_grad) out.push_back(&p.tensor);
  }
  for (const auto& p : adapters) {
    if (p.tensor.requires_grad) out.push_back(&p.tensor);
  }
  return out;
}

std::int64_t AdaptedModel::total_param_count() const {
  std::int64_t n = 0;
  for (const auto& p : base) n += p.tensor.numel();
  for (const auto& p : adapters) n += p.tensor.numel();
  return n;
}

std::int64_t AdaptedModel::trainable_param_count() const {
  std::int64_t n = 0;
  for (const auto& p : base) {
    if (p.tensor.requires_grad) n += p.tensor.numel();
  }
  for (const auto& p : adapters) {
    if (p.tensor.requires_grad) n += p.tensor.numel();
  }
  return n;
}

namespace {

Tensor gaussian_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data) v = rng.gaussian(0.0, stddev);
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

AdaptedModel init_base_model(const TransformerConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(numerics::derive_seed(seed, "model-init"));
  AdaptedModel m;
  m.config = config;
  const int C = config.d_model;
  const int F = config.d_ff;

  auto add = [&m](std::string name, Tensor t) {
    m.base.push_back(Parameter{std::move(name), std::move(t)});
  };

  add("tok_embed", gaussian_tensor({config.vocab_size, C}, kInitStd, rng));
  add("pos_embed", gaussian_tensor({config.max_seq_len, C}, kInitStd, rng));
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    add(prefix + "ln1.gain", Tensor::full({C}, 1.0, true));
    add(prefix + "ln1.bias", Tensor::zeros({C}, true));
    for (const char* proj : {"q_proj", "k_proj", "v_proj", "out_proj"}) {
      add(prefix + proj + ".weight", gaussian_tensor({C, C}, kInitStd, rng));
      add(prefix + proj + ".bias", Tensor::zeros({C}, true));
    }
    add(prefix + "ln2.gain", Tensor::full({C}, 1.0, true));
    add(prefix + "ln2.bias", Tensor::zeros({C}, true));
    add(prefix + "ffn1.weight", gaussian_tensor({F, C}, kInitStd, rng));
    add(prefix + "ffn1.bias", Tensor::zeros({F}, true));
    add(prefix + "ffn2.weight", gaussian_tensor({C, F}, kInitStd, rng));
    add(prefix + "ffn2.bias", Tensor::zeros({C}, true));
  }
  add("ln_f.gain", Tensor::full({C}, 1.0, true));
  add("ln_f.bias", Tensor::zeros({C}, true));
  add("lm_head", gaussian_tensor({config.vocab_size, C}, kInitStd, rng));
  return m;
}

AdaptedModel attach_lora(const AdaptedModel& base_model, const LoraConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  if (base_model.lora) {
    throw std::invalid_argument("attach_lora: model already has adapters");
  }
  Rng rng(numerics::derive_seed(seed, "lora-init"));
  AdaptedModel m;
  m.config = base_model.config;
  m.lora = cfg;
  m.base = base_model.base;
  for (auto& p : m.base) p.tensor.requires_grad = false;

  const int C = m.config.d_model;
  for (int l = 0; l < m.config.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (const auto& target : lora_targetable_modules()) {
      if (std::find(cfg.target_modules.begin(), cfg.target_modules.end(), target) ==
          cfg.target_modules.end()) {
        continue;
      }
      m.adapters.push_back(
          Parameter{prefix + target + ".lora_a", gaussian_tensor({cfg.rank, C}, kInitStd, rng)});
      m.adapters.push_back(
          Parameter{prefix + target + ".lora_b", Tensor::zeros({C, cfg.rank}, true)});
    }
  }
  return m;
}

void set_base_trainable(AdaptedModel& m, bool trainable) {
  for (auto& p : m.base) p.tensor.requires_grad = trainable;
}

double trainable_fraction(const AdaptedModel& m) {
  const auto total = m.total_param_count();
  if (total == 0) return 0.0;
  return static_cast<double>(m.trainable_param_count()) / static_cast<double>(total);
}

}  // namespace secokd::model
