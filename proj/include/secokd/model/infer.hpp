#pragma once

#include <span>
#include <vector>

#include "secokd/model/model.hpp"

namespace secokd::model {

// Incremental forward pass with per-layer KV caches. Tokens are processed one
// position at a time, so logits at a position never depend on later tokens
// and re-feeding the same prefix reproduces the same rows bitwise. Read-only
// over the model; independent sessions may run concurrently.
class InferenceSession {
 public:
  explicit InferenceSession(const AdaptedModel& m);

  void reset();
  int length() const { return t_; }

  // Feeds one token and returns the logits row (size vocab) at its position.
  const std::vector<double>& feed(int token_id);

 private:
  struct ProjRefs {
    const numerics::Tensor* weight = nullptr;
    const numerics::Tensor* bias = nullptr;
    const numerics::Tensor* lora_a = nullptr;
    const numerics::Tensor* lora_b = nullptr;
  };
  struct LayerRefs {
    const numerics::Tensor *ln1_gain, *ln1_bias, *ln2_gain, *ln2_bias;
    ProjRefs q, k, v, o;
    const numerics::Tensor *ffn1_w, *ffn1_b, *ffn2_w, *ffn2_b;
    std::vector<double> k_cache;   // [max_seq_len, d_model]
    std::vector<double> vt_cache;  // [d_model, max_seq_len]
  };

  void apply_projection(const ProjRefs& p, const std::vector<double>& in,
                        std::vector<double>& out);

  const AdaptedModel& model_;
  std::vector<LayerRefs> layers_;
  const numerics::Tensor *tok_, *pos_, *lnf_gain_, *lnf_bias_, *head_;
  double scaling_ = 0.0;
  int t_ = 0;

  std::vector<double> x_, h_, q_, k_, v_, ctx_, ffn_, scores_, att_, lora_u_, logits_;
};

// Full-sequence logits matrix [T, vocab].
numerics::Tensor forward(const AdaptedModel& m, std::span<const int> token_ids);

// Greedy decoding. Stops after max_new tokens or when stop_token is produced
// (the stop token is consumed, not returned). Returns only new ids. Throws
// when the prompt leaves no room for max_new tokens in the context window.
std::vector<int> generate(const AdaptedModel& m, std::span<const int> prompt_ids, int max_new,
                          int stop_token);

// Per-token log-probabilities of target_ids given prefix_ids; entry i is
// log softmax(logits at position |prefix|+i-1)[target_i]. Empty target gives
// an empty result.
std::vector<double> log_prob_of(const AdaptedModel& m, std::span<const int> prefix_ids,
                                std::span<const int> target_ids);

}  // namespace secokd::model
