#include "secokd/model/infer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "secokd/model/tape.hpp"
#include "secokd/numerics/kernels.hpp"

namespace secokd::model {

using numerics::dot;
using numerics::Tensor;

InferenceSession::InferenceSession(const AdaptedModel& m) : model_(m) {
  const auto& cfg = m.config;
  cfg.validate();
  const int C = cfg.d_model;

  auto proj_refs = [&m](const std::string& prefix, const std::string& name) {
    ProjRefs p;
    p.weight = &m.param(prefix + name + ".weight");
    p.bias = &m.param(prefix + name + ".bias");
    if (m.lora) {
      const auto& targets = m.lora->target_modules;
      if (std::find(targets.begin(), targets.end(), name) != targets.end()) {
        p.lora_a = &m.param(prefix + name + ".lora_a");
        p.lora_b = &m.param(prefix + name + ".lora_b");
      }
    }
    return p;
  };

  layers_.resize(static_cast<size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    LayerRefs& lr = layers_[static_cast<size_t>(l)];
    lr.ln1_gain = &m.param(prefix + "ln1.gain");
    lr.ln1_bias = &m.param(prefix + "ln1.bias");
    lr.ln2_gain = &m.param(prefix + "ln2.gain");
    lr.ln2_bias = &m.param(prefix + "ln2.bias");
    lr.q = proj_refs(prefix, "q_proj");
    lr.k = proj_refs(prefix, "k_proj");
    lr.v = proj_refs(prefix, "v_proj");
    lr.o = proj_refs(prefix, "out_proj");
    lr.ffn1_w = &m.param(prefix + "ffn1.weight");
    lr.ffn1_b = &m.param(prefix + "ffn1.bias");
    lr.ffn2_w = &m.param(prefix + "ffn2.weight");
    lr.ffn2_b = &m.param(prefix + "ffn2.bias");
    lr.k_cache.assign(static_cast<size_t>(cfg.max_seq_len) * C, 0.0);
    lr.vt_cache.assign(static_cast<size_t>(C) * cfg.max_seq_len, 0.0);
  }
  tok_ = &m.param("tok_embed");
  pos_ = &m.param("pos_embed");
  lnf_gain_ = &m.param("ln_f.gain");
  lnf_bias_ = &m.param("ln_f.bias");
  head_ = &m.param("lm_head");
  scaling_ = m.lora_scaling();

  x_.resize(static_cast<size_t>(C));
  h_.resize(static_cast<size_t>(C));
  q_.resize(static_cast<size_t>(C));
  k_.resize(static_cast<size_t>(C));
  v_.resize(static_cast<size_t>(C));
  ctx_.resize(static_cast<size_t>(C));
  ffn_.resize(static_cast<size_t>(cfg.d_ff));
  scores_.resize(static_cast<size_t>(cfg.max_seq_len));
  att_.resize(static_cast<size_t>(cfg.max_seq_len));
  lora_u_.resize(m.lora ? static_cast<size_t>(m.lora->rank) : 0);
  logits_.resize(static_cast<size_t>(cfg.vocab_size));
}

void InferenceSession::reset() { t_ = 0; }

void InferenceSession::apply_projection(const ProjRefs& p, const std::vector<double>& in,
                                        std::vector<double>& out) {
  const int C = model_.config.d_model;
  for (int j = 0; j < C; ++j) {
    out[static_cast<size_t>(j)] = dot(p.weight->row_ptr(j), in.data(), C) + p.bias->data[static_cast<size_t>(j)];
  }
  if (p.lora_a) {
    const int r = model_.lora->rank;
    for (int ri = 0; ri < r; ++ri) {
      lora_u_[static_cast<size_t>(ri)] = dot(p.lora_a->row_ptr(ri), in.data(), C);
    }
    for (int j = 0; j < C; ++j) {
      out[static_cast<size_t>(j)] += scaling_ * dot(p.lora_b->row_ptr(j), lora_u_.data(), r);
    }
  }
}

const std::vector<double>& InferenceSession::feed(int token_id) {
  const auto& cfg = model_.config;
  if (t_ >= cfg.max_seq_len) {
    throw std::invalid_argument("feed: sequence length " + std::to_string(t_ + 1) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  if (token_id < 0 || token_id >= cfg.vocab_size) {
    throw std::invalid_argument("feed: token id " + std::to_string(token_id) +
                                " out of range for vocab " + std::to_string(cfg.vocab_size));
  }
  const int C = cfg.d_model;
  const int S = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(S));

  for (int c = 0; c < C; ++c) {
    x_[static_cast<size_t>(c)] = tok_->at(token_id, c) + pos_->at(t_, c);
  }

  for (auto& lr : layers_) {
    numerics::layer_norm_row(x_.data(), lr.ln1_gain->data.data(), lr.ln1_bias->data.data(),
                             kLayerNormEps, h_.data(), C);
    apply_projection(lr.q, h_, q_);
    apply_projection(lr.k, h_, k_);
    apply_projection(lr.v, h_, v_);

    double* krow = lr.k_cache.data() + static_cast<size_t>(t_) * C;
    for (int c = 0; c < C; ++c) krow[c] = k_[static_cast<size_t>(c)];
    for (int c = 0; c < C; ++c) {
      lr.vt_cache[static_cast<size_t>(c) * cfg.max_seq_len + t_] = v_[static_cast<size_t>(c)];
    }

    const int visible = t_ + 1;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const int off = hd * S;
      for (int j = 0; j < visible; ++j) {
        scores_[static_cast<size_t>(j)] =
            dot(q_.data() + off, lr.k_cache.data() + static_cast<size_t>(j) * C + off, S) *
            att_scale;
      }
      numerics::row_softmax(scores_.data(), att_.data(), visible);
      for (int j = 0; j < S; ++j) {
        ctx_[static_cast<size_t>(off + j)] =
            dot(att_.data(), lr.vt_cache.data() + static_cast<size_t>(off + j) * cfg.max_seq_len,
                visible);
      }
    }
    apply_projection(lr.o, ctx_, h_);
    for (int c = 0; c < C; ++c) x_[static_cast<size_t>(c)] += h_[static_cast<size_t>(c)];

    numerics::layer_norm_row(x_.data(), lr.ln2_gain->data.data(), lr.ln2_bias->data.data(),
                             kLayerNormEps, h_.data(), C);
    for (int j = 0; j < cfg.d_ff; ++j) {
      const double u = dot(lr.ffn1_w->row_ptr(j), h_.data(), C) + lr.ffn1_b->data[static_cast<size_t>(j)];
      ffn_[static_cast<size_t>(j)] = u > 0.0 ? u : 0.0;
    }
    for (int c = 0; c < C; ++c) {
      x_[static_cast<size_t>(c)] +=
          dot(lr.ffn2_w->row_ptr(c), ffn_.data(), cfg.d_ff) + lr.ffn2_b->data[static_cast<size_t>(c)];
    }
  }

  numerics::layer_norm_row(x_.data(), lnf_gain_->data.data(), lnf_bias_->data.data(),
                           kLayerNormEps, h_.data(), C);
  for (int v = 0; v < cfg.vocab_size; ++v) {
    logits_[static_cast<size_t>(v)] = dot(head_->row_ptr(v), h_.data(), C);
  }
  ++t_;
  return logits_;
}

Tensor forward(const AdaptedModel& m, std::span<const int> token_ids) {
  if (token_ids.empty()) throw std::invalid_argument("forward: empty token sequence");
  InferenceSession session(m);
  Tensor out = Tensor::zeros({static_cast<int>(token_ids.size()), m.config.vocab_size});
  for (size_t i = 0; i < token_ids.size(); ++i) {
    const auto& row = session.feed(token_ids[i]);
    std::copy(row.begin(), row.end(), out.row_ptr(static_cast<int>(i)));
  }
  return out;
}

std::vector<int> generate(const AdaptedModel& m, std::span<const int> prompt_ids, int max_new,
                          int stop_token) {
  if (prompt_ids.empty()) throw std::invalid_argument("generate: empty prompt");
  if (max_new < 0) throw std::invalid_argument("generate: max_new must be >= 0");
  if (static_cast<int>(prompt_ids.size()) + max_new > m.config.max_seq_len) {
    throw std::invalid_argument(
        "generate: prompt length " + std::to_string(prompt_ids.size()) + " + max_new " +
        std::to_string(max_new) + " exceeds max_seq_len " + std::to_string(m.config.max_seq_len));
  }
  std::vector<int> out;
  if (max_new == 0) return out;

  InferenceSession session(m);
  const std::vector<double>* logits = nullptr;
  for (int id : prompt_ids) logits = &session.feed(id);

  for (int step = 0; step < max_new; ++step) {
    // Greedy argmax, lowest index on ties.
    int best = 0;
    for (int v = 1; v < m.config.vocab_size; ++v) {
      if ((*logits)[static_cast<size_t>(v)] > (*logits)[static_cast<size_t>(best)]) best = v;
    }
    if (best == stop_token) break;
    out.push_back(best);
    if (step + 1 < max_new) logits = &session.feed(best);
  }
  return out;
}

std::vector<double> log_prob_of(const AdaptedModel& m, std::span<const int> prefix_ids,
                                std::span<const int> target_ids) {
  if (prefix_ids.empty()) throw std::invalid_argument("log_prob_of: empty prefix");
  if (static_cast<int>(prefix_ids.size() + target_ids.size()) > m.config.max_seq_len) {
    throw std::invalid_argument("log_prob_of: prefix + target exceeds max_seq_len " +
                                std::to_string(m.config.max_seq_len));
  }
  std::vector<double> out;
  if (target_ids.empty()) return out;

  InferenceSession session(m);
  const std::vector<double>* logits = nullptr;
  for (int id : prefix_ids) logits = &session.feed(id);
  for (size_t i = 0; i < target_ids.size(); ++i) {
    const int target = target_ids[i];
    if (target < 0 || target >= m.config.vocab_size) {
      throw std::invalid_argument("log_prob_of: target id out of range");
    }
    const double lse = numerics::row_logsumexp(logits->data(), m.config.vocab_size);
    out.push_back((*logits)[static_cast<size_t>(target)] - lse);
    if (i + 1 < target_ids.size()) logits = &session.feed(target);
  }
  return out;
}

}  // namespace secokd::model
