#pragma once

#include <string>
#include <vector>

namespace secokd::model {

struct TransformerConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 256;
  int max_seq_len = 1024;

  void validate() const;  // throws on d_model % n_heads != 0 etc.
  int head_dim() const { return d_model / n_heads; }
};

struct LoraConfig {
  int rank = 4;
  double alpha = 8.0;
  double dropout = 0.05;
  std::vector<std::string> target_modules = {"q_proj", "k_proj", "v_proj", "out_proj"};

  double scaling() const { return alpha / rank; }
  void validate() const;
};

// The projection names LoRA may target.
const std::vector<std::string>& lora_targetable_modules();

}  // namespace secokd::model
