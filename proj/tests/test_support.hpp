#pragma once

// Shared helpers for the pipeline test suites.

#include <string>
#include <utility>
#include <vector>

#include "secokd/model/model.hpp"
#include "secokd/tasks/task.hpp"
#include "secokd/tasks/tokenizer.hpp"

namespace secokd::testing {

// A window scripts the generated tokens for prompts of one known length:
// logits row (start_row + i) argmaxes to tokens[i].
struct ScriptWindow {
  int start_row = 0;
  std::vector<int> tokens;
};

// Transformer whose next-token choice depends only on the position: all
// weights are zero except one-hot position embeddings and an identity-like
// head. Rows outside every window argmax to token 0.
inline model::AdaptedModel make_position_scripted_model(int vocab_size, int max_seq_len,
                                                        const std::vector<ScriptWindow>& windows) {
  model::TransformerConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = ((vocab_size + 1) / 2) * 2;  // even, so two heads divide it
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 4;
  cfg.max_seq_len = max_seq_len;

  auto m = model::init_base_model(cfg, 0);
  for (auto& p : m.base) {
    for (double& v : p.tensor.data) v = 0.0;
    if (p.name.find(".gain") != std::string::npos) {
      for (double& v : p.tensor.data) v = 1.0;
    }
  }
  auto* head = m.find("lm_head");
  for (int v = 0; v < vocab_size; ++v) head->at(v, v) = 1.0;
  auto* pos = m.find("pos_embed");
  for (const auto& w : windows) {
    for (size_t i = 0; i < w.tokens.size(); ++i) {
      pos->at(w.start_row + static_cast<int>(i), w.tokens[i]) = 5.0;
    }
  }
  model::set_base_trainable(m, false);
  return m;
}

// Eight same-length compare demos (all "yes" so no length-changing "not"),
// giving every k-shot prompt over fixed-length queries one known token count.
inline tasks::DemonstrationPool uniform_length_pool() {
  tasks::DemonstrationPool pool;
  pool.task_id = "compare";
  const std::vector<std::pair<int, int>> pairs = {{7, 3},  {9, 4},  {8, 2},  {6, 1},
                                                  {5, 0},  {9, 7},  {8, 5},  {7, 2}};
  for (auto [a, b] : pairs) {
    tasks::Demonstration d;
    d.question = "Is " + std::to_string(a) + " greater than " + std::to_string(b) + "?";
    d.rationale = std::to_string(a) + " is greater than " + std::to_string(b) + ".";
    d.answer = "yes";
    pool.demos.push_back(std::move(d));
  }
  return pool;
}

inline tasks::Sample compare_sample(int a, int b) {
  tasks::Sample s;
  s.task_id = "compare";
  s.question = "Is " + std::to_string(a) + " greater than " + std::to_string(b) + "?";
  s.label = a > b ? "yes" : "no";
  s.split = "test";
  return s;
}

}  // namespace secokd::testing
