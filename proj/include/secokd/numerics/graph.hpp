#pragma once

#include <functional>
#include <vector>

#include "secokd/numerics/tensor.hpp"

namespace secokd::numerics {

// Reverse-mode autodiff tape over dense tensors. A Graph is built for one
// forward pass, backward() is run once, then the graph is discarded. Ops may
// only reference earlier nodes, so the tape order is already topological and
// cycles are impossible by construction.
//
// All forward arithmetic routes through the kernels in kernels.hpp with fixed
// summation order, so repeated runs are bitwise deterministic.
class Graph {
 public:
  struct Ref {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  // Leaf carrying a copy of t; participates in backward iff t.requires_grad.
  Ref input(const Tensor& t);
  // Leaf that never receives gradient (masks, dropout patterns, ...).
  Ref constant(Tensor t);

  Ref matmul(Ref a, Ref b, bool trans_a = false, bool trans_b = false);
  Ref add(Ref a, Ref b);  // same shape, or b a row vector broadcast over a's rows
  Ref mul(Ref a, Ref b);  // elementwise, same shape
  Ref scale(Ref a, double factor);
  Ref relu(Ref a);
  Ref transpose(Ref a);
  Ref softmax_rows(Ref a);
  Ref layer_norm_rows(Ref x, Ref gain, Ref bias, double eps);
  Ref embedding_rows(Ref table, std::vector<int> ids);
  Ref slice_cols(Ref a, int start, int len);
  Ref concat_cols(const std::vector<Ref>& parts);
  Ref sum(Ref a);

  // Sum over i of: logsumexp(logits[rows[i]]) - logits[rows[i], targets[i]].
  // This is the sequence negative log-likelihood restricted to the given rows.
  Ref cross_entropy_sum(Ref logits, std::vector<int> rows, std::vector<int> targets);

  const Tensor& value(Ref r) const;

  // Backpropagates from a scalar loss. Every requires_grad input receives a
  // gradient tensor (zeros when the loss does not depend on it).
  void backward(Ref loss);

  // Gradient of the last backward() w.r.t. the given node; nullptr when the
  // node does not track gradients.
  const Tensor* grad(Ref r) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool tracked = false;
    bool grad_live = false;
    std::function<void(Graph&, int)> backprop;
  };

  int push(Tensor value, bool tracked, std::function<void(Graph&, int)> backprop);
  Node& node(Ref r);
  const Node& node(Ref r) const;
  Tensor& grad_buffer(int idx);
  void accumulate(int idx, const Tensor& delta);

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Product with optional transposes, used by matmul forward and backward.
Tensor matmul_values(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b);

}  // namespace secokd::numerics
