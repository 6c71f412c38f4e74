#include "secokd/model/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace secokd::model {

using numerics::Graph;
using numerics::Tensor;

TapeRunner::TapeRunner(const AdaptedModel& m, bool training, numerics::Rng* dropout_rng)
    : model_(m), training_(training), dropout_rng_(dropout_rng) {
  for (const auto& p : m.base) refs_[p.name] = graph_.input(p.tensor);
  for (const auto& p : m.adapters) refs_[p.name] = graph_.input(p.tensor);
  for (const auto& p : m.base) {
    if (p.tensor.requires_grad) trainable_refs_.push_back(refs_[p.name]);
  }
  for (const auto& p : m.adapters) {
    if (p.tensor.requires_grad) trainable_refs_.push_back(refs_[p.name]);
  }
}

Graph::Ref TapeRunner::ref(const std::string& name) const {
  auto it = refs_.find(name);
  if (it == refs_.end()) throw std::invalid_argument("TapeRunner: no parameter '" + name + "'");
  return it->second;
}

Graph::Ref TapeRunner::projection(Graph::Ref x, const std::string& layer_prefix,
                                  const std::string& proj_name, int seq_len) {
  Graph::Ref w = ref(layer_prefix + proj_name + ".weight");
  Graph::Ref b = ref(layer_prefix + proj_name + ".bias");
  Graph::Ref y = graph_.add(graph_.matmul(x, w, false, true), b);

  if (!model_.lora) return y;
  const auto& targets = model_.lora->target_modules;
  if (std::find(targets.begin(), targets.end(), proj_name) == targets.end()) return y;

  Graph::Ref a = ref(layer_prefix + proj_name + ".lora_a");
  Graph::Ref bb = ref(layer_prefix + proj_name + ".lora_b");
  Graph::Ref adapter_in = x;
  const double p = model_.lora->dropout;
  if (training_ && p > 0.0) {
    if (!dropout_rng_) throw std::invalid_argument("TapeRunner: dropout requires an rng");
    Tensor mask = Tensor::zeros({seq_len, model_.config.d_model});
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& v : mask.data) v = dropout_rng_->uniform() < p ? 0.0 : keep_scale;
    adapter_in = graph_.mul(x, graph_.constant(std::move(mask)));
  }
  Graph::Ref u = graph_.matmul(adapter_in, a, false, true);   // [T, rank]
  Graph::Ref delta = graph_.matmul(u, bb, false, true);       // [T, d_model]
  return graph_.add(y, graph_.scale(delta, model_.lora->scaling()));
}

Graph::Ref TapeRunner::forward_logits(std::span<const int> ids) {
  const auto& cfg = model_.config;
  const int T = static_cast<int>(ids.size());
  if (T == 0) throw std::invalid_argument("forward: empty token sequence");
  if (T > cfg.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(T) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                  " out of range for vocab " + std::to_string(cfg.vocab_size));
    }
  }

  std::vector<int> token_ids(ids.begin(), ids.end());
  std::vector<int> positions(static_cast<size_t>(T));
  std::iota(positions.begin(), positions.end(), 0);

  Graph::Ref x = graph_.add(graph_.embedding_rows(ref("tok_embed"), token_ids),
                            graph_.embedding_rows(ref("pos_embed"), positions));

  // Causal mask shared by all layers of this sequence.
  Tensor mask = Tensor::zeros({T, T});
  for (int i = 0; i < T; ++i) {
    for (int j = i + 1; j < T; ++j) mask.at(i, j) = kAttentionMask;
  }
  Graph::Ref mask_ref = graph_.constant(std::move(mask));

  const int S = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(S));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    Graph::Ref h =
        graph_.layer_norm_rows(x, ref(prefix + "ln1.gain"), ref(prefix + "ln1.bias"),
                               kLayerNormEps);
    Graph::Ref q = projection(h, prefix, "q_proj", T);
    Graph::Ref k = projection(h, prefix, "k_proj", T);
    Graph::Ref v = projection(h, prefix, "v_proj", T);

    std::vector<Graph::Ref> head_ctx;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      Graph::Ref qh = graph_.slice_cols(q, hd * S, S);
      Graph::Ref kh = graph_.slice_cols(k, hd * S, S);
      Graph::Ref vh = graph_.slice_cols(v, hd * S, S);
      Graph::Ref scores = graph_.add(graph_.scale(graph_.matmul(qh, kh, false, true), att_scale),
                                     mask_ref);
      Graph::Ref att = graph_.softmax_rows(scores);
      Graph::Ref vt = graph_.transpose(vh);  // [S, T], contiguous time rows
      head_ctx.push_back(graph_.matmul(att, vt, false, true));
    }
    Graph::Ref ctx = graph_.concat_cols(head_ctx);
    Graph::Ref attn_out = projection(ctx, prefix, "out_proj", T);
    x = graph_.add(x, attn_out);

    Graph::Ref h2 =
        graph_.layer_norm_rows(x, ref(prefix + "ln2.gain"), ref(prefix + "ln2.bias"),
                               kLayerNormEps);
    Graph::Ref u = graph_.relu(
        graph_.add(graph_.matmul(h2, ref(prefix + "ffn1.weight"), false, true),
                   ref(prefix + "ffn1.bias")));
    Graph::Ref f = graph_.add(graph_.matmul(u, ref(prefix + "ffn2.weight"), false, true),
                              ref(prefix + "ffn2.bias"));
    x = graph_.add(x, f);
  }

  Graph::Ref xf = graph_.layer_norm_rows(x, ref("ln_f.gain"), ref("ln_f.bias"), kLayerNormEps);
  return graph_.matmul(xf, ref("lm_head"), false, true);
}

}  // namespace secokd::model
