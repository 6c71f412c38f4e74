#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "secokd/model/model.hpp"
#include "secokd/numerics/graph.hpp"
#include "secokd/numerics/rng.hpp"

namespace secokd::model {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kAttentionMask = -1e30;

// Builds training forward passes on an autodiff tape. All model parameters
// are registered once as graph leaves, so several sequences (a batch) can
// share them and gradients accumulate per parameter.
class TapeRunner {
 public:
  // dropout_rng is only consulted when training is true and the model has a
  // nonzero adapter dropout.
  TapeRunner(const AdaptedModel& m, bool training, numerics::Rng* dropout_rng);

  // Logits [T, vocab] for one token sequence.
  numerics::Graph::Ref forward_logits(std::span<const int> ids);

  numerics::Graph& graph() { return graph_; }

  // Leaf refs aligned with AdaptedModel::trainable_params() order.
  const std::vector<numerics::Graph::Ref>& trainable_refs() const { return trainable_refs_; }

 private:
  numerics::Graph::Ref ref(const std::string& name) const;
  numerics::Graph::Ref projection(numerics::Graph::Ref x, const std::string& layer_prefix,
                                  const std::string& proj_name, int seq_len);

  const AdaptedModel& model_;
  bool training_ = false;
  numerics::Rng* dropout_rng_ = nullptr;
  numerics::Graph graph_;
  std::unordered_map<std::string, numerics::Graph::Ref> refs_;
  std::vector<numerics::Graph::Ref> trainable_refs_;
};

}  // namespace secokd::model
