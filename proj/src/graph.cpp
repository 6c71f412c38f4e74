#include "secokd/numerics/graph.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "secokd/numerics/kernels.hpp"

namespace secokd::numerics {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool is_2d(const Tensor& t) { return t.shape.size() == 2; }

Tensor transpose_values(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

}  // namespace

Tensor matmul_values(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b) {
  require(is_2d(a) && is_2d(b), "matmul: operands must be 2-d");
  const int m = trans_a ? a.cols() : a.rows();
  const int k = trans_a ? a.rows() : a.cols();
  const int kb = trans_b ? b.cols() : b.rows();
  const int n = trans_b ? b.rows() : b.cols();
  require(k == kb, "matmul: inner dimensions differ");

  Tensor out = Tensor::zeros({m, n});
  if (!trans_a && trans_b) {
    matmul_nt(a.data.data(), m, k, b.data.data(), n, out.data.data());
  } else if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i) {
      double* crow = out.row_ptr(i);
      for (int kk = 0; kk < k; ++kk) axpy(a.at(i, kk), b.row_ptr(kk), crow, n);
    }
  } else if (trans_a && !trans_b) {
    for (int kk = 0; kk < k; ++kk) {
      const double* brow = b.row_ptr(kk);
      for (int i = 0; i < m; ++i) axpy(a.at(kk, i), brow, out.row_ptr(i), n);
    }
  } else {
    Tensor nn = matmul_values(b, false, a, false);
    out = transpose_values(nn);
  }
  return out;
}

int Graph::push(Tensor value, bool tracked, std::function<void(Graph&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.tracked = tracked;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Graph::Node& Graph::node(Ref r) {
  assert(r.idx >= 0 && r.idx < static_cast<int>(nodes_.size()));
  return nodes_[static_cast<size_t>(r.idx)];
}

const Graph::Node& Graph::node(Ref r) const {
  assert(r.idx >= 0 && r.idx < static_cast<int>(nodes_.size()));
  return nodes_[static_cast<size_t>(r.idx)];
}

Tensor& Graph::grad_buffer(int idx) {
  Node& n = nodes_[static_cast<size_t>(idx)];
  if (!n.grad_live) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_live = true;
  }
  return n.grad;
}

void Graph::accumulate(int idx, const Tensor& delta) {
  Tensor& g = grad_buffer(idx);
  assert(g.numel() == delta.numel());
  axpy(1.0, delta.data.data(), g.data.data(), static_cast<int>(g.numel()));
}

Graph::Ref Graph::input(const Tensor& t) {
  const int idx = push(t, t.requires_grad, nullptr);
  return Ref{idx};
}

Graph::Ref Graph::constant(Tensor t) {
  t.requires_grad = false;
  const int idx = push(std::move(t), false, nullptr);
  return Ref{idx};
}

Graph::Ref Graph::matmul(Ref a, Ref b, bool trans_a, bool trans_b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  Tensor out = matmul_values(av, trans_a, bv, trans_b);
  const bool tracked = node(a).tracked || node(b).tracked;
  const int ai = a.idx, bi = b.idx;
  const int idx = push(std::move(out), tracked, [ai, bi, trans_a, trans_b](Graph& g, int self) {
    const Tensor& dc = g.nodes_[self].grad;
    const Tensor& av2 = g.nodes_[ai].value;
    const Tensor& bv2 = g.nodes_[bi].value;
    if (g.nodes_[ai].tracked) {
      // dA' = dC * B'^T, transposed back when A was transposed.
      Tensor da = matmul_values(dc, false, bv2, !trans_b);
      if (trans_a) da = transpose_values(da);
      g.accumulate(ai, da);
    }
    if (g.nodes_[bi].tracked) {
      // dB' = A'^T * dC.
      Tensor db = trans_a ? matmul_values(av2, false, dc, false)
                          : matmul_values(av2, true, dc, false);
      if (trans_b) db = transpose_values(db);
      g.accumulate(bi, db);
    }
  });
  return Ref{idx};
}

Graph::Ref Graph::add(Ref a, Ref b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  const bool broadcast = !av.same_shape(bv);
  if (broadcast) {
    require(bv.numel() == av.cols() && bv.rows() == 1,
            "add: shapes must match or b must be a broadcastable row");
  }
  Tensor out = av;
  out.requires_grad = false;
  if (broadcast) {
    for (int i = 0; i < av.rows(); ++i) axpy(1.0, bv.data.data(), out.row_ptr(i), av.cols());
  } else {
    axpy(1.0, bv.data.data(), out.data.data(), static_cast<int>(out.numel()));
  }
  const bool tracked = node(a).tracked || node(b).tracked;
  const int ai = a.idx, bi = b.idx;
  const int idx = push(std::move(out), tracked, [ai, bi, broadcast](Graph& g, int self) {
    const Tensor& dc = g.nodes_[self].grad;
    if (g.nodes_[ai].tracked) g.accumulate(ai, dc);
    if (g.nodes_[bi].tracked) {
      if (!broadcast) {
        g.accumulate(bi, dc);
      } else {
        Tensor db = Tensor::zeros(g.nodes_[bi].value.shape);
        for (int i = 0; i < dc.rows(); ++i) axpy(1.0, dc.row_ptr(i), db.data.data(), dc.cols());
        g.accumulate(bi, db);
      }
    }
  });
  return Ref{idx};
}

Graph::Ref Graph::mul(Ref a, Ref b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require(av.same_shape(bv), "mul: shapes must match");
  Tensor out = av;
  out.requires_grad = false;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  const bool tracked = node(a).tracked || node(b).tracked;
  const int ai = a.idx, bi = b.idx;
  const int idx = push(std::move(out), tracked, [ai, bi](Graph& g, int self) {
    const Tensor& dc = g.nodes_[self].grad;
    const Tensor& av2 = g.nodes_[ai].value;
    const Tensor& bv2 = g.nodes_[bi].value;
    if (g.nodes_[ai].tracked) {
      Tensor da = dc;
      for (size_t i = 0; i < da.data.size(); ++i) da.data[i] *= bv2.data[i];
      g.accumulate(ai, da);
    }
    if (g.nodes_[bi].tracked) {
      Tensor db = dc;
      for (size_t i = 0; i < db.data.size(); ++i) db.data[i] *= av2.data[i];
      g.accumulate(bi, db);
    }
  });
  return Ref{idx};
}

Graph::Ref Graph::scale(Ref a, double factor) {
  Tensor out = node(a).value;
  out.requires_grad = false;
  for (double& v : out.data) v *= factor;
  const int ai = a.idx;
  const int idx = push(std::move(out), node(a).tracked, [ai, factor](Graph& g, int self) {
    if (!g.nodes_[ai].tracked) return;
    Tensor da = g.nodes_[self].grad;
    for (double& v : da.data) v *= factor;
    g.accumulate(ai, da);
  });
  return Ref{idx};
}

Graph::Ref Graph::relu(Ref a) {
  Tensor out = node(a).value;
  out.requires_grad = false;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const int ai = a.idx;
  const int idx = push(std::move(out), node(a).tracked, [ai](Graph& g, int self) {
    if (!g.nodes_[ai].tracked) return;
    const Tensor& av = g.nodes_[ai].value;
    Tensor da = g.nodes_[self].grad;
    for (size_t i = 0; i < da.data.size(); ++i) {
      if (av.data[i] <= 0.0) da.data[i] = 0.0;
    }
    g.accumulate(ai, da);
  });
  return Ref{idx};
}

Graph::Ref Graph::transpose(Ref a) {
  require(is_2d(node(a).value), "transpose: operand must be 2-d");
  Tensor out = transpose_values(node(a).value);
  const int ai = a.idx;
  const int idx = push(std::move(out), node(a).tracked, [ai](Graph& g, int self) {
    if (!g.nodes_[ai].tracked) return;
    g.accumulate(ai, transpose_values(g.nodes_[self].grad));
  });
  return Ref{idx};
}

Graph::Ref Graph::softmax_rows(Ref a) {
  const Tensor& av = node(a).value;
  Tensor out = Tensor::zeros(av.shape);
  const int n = av.cols();
  for (int i = 0; i < av.rows(); ++i) row_softmax(av.row_ptr(i), out.row_ptr(i), n);
  const int ai = a.idx;
  const int idx = push(std::move(out), node(a).tracked, [ai](Graph& g, int self) {
    if (!g.nodes_[ai].tracked) return;
    const Tensor& y = g.nodes_[self].value;
    const Tensor& dy = g.nodes_[self].grad;
    Tensor da = Tensor::zeros(y.shape);
    const int cols = y.cols();
    for (int i = 0; i < y.rows(); ++i) {
      const double* yr = y.row_ptr(i);
      const double* dyr = dy.row_ptr(i);
      double inner = 0.0;
      for (int j = 0; j < cols; ++j) inner += dyr[j] * yr[j];
      double* dar = da.row_ptr(i);
      for (int j = 0; j < cols; ++j) dar[j] = yr[j] * (dyr[j] - inner);
    }
    g.accumulate(ai, da);
  });
  return Ref{idx};
}

Graph::Ref Graph::layer_norm_rows(Ref x, Ref gain, Ref bias, double eps) {
  const Tensor& xv = node(x).value;
  const Tensor& gv = node(gain).value;
  const Tensor& bv = node(bias).value;
  const int n = xv.cols();
  require(gv.numel() == n && bv.numel() == n, "layer_norm: gain/bias size mismatch");
  Tensor out = Tensor::zeros(xv.shape);
  for (int i = 0; i < xv.rows(); ++i) {
    layer_norm_row(xv.row_ptr(i), gv.data.data(), bv.data.data(), eps, out.row_ptr(i), n);
  }
  const bool tracked = node(x).tracked || node(gain).tracked || node(bias).tracked;
  const int xi = x.idx, gi = gain.idx, bi = bias.idx;
  const int idx = push(std::move(out), tracked, [xi, gi, bi, eps](Graph& g, int self) {
    const Tensor& xv2 = g.nodes_[xi].value;
    const Tensor& gv2 = g.nodes_[gi].value;
    const Tensor& dy = g.nodes_[self].grad;
    const int rows = xv2.rows(), cols = xv2.cols();
    Tensor dx = Tensor::zeros(xv2.shape);
    Tensor dgain = Tensor::zeros(gv2.shape);
    Tensor dbias = Tensor::zeros(gv2.shape);
    std::vector<double> xhat(static_cast<size_t>(cols));
    for (int i = 0; i < rows; ++i) {
      const double* xr = xv2.row_ptr(i);
      const double* dyr = dy.row_ptr(i);
      double mean = 0.0;
      for (int j = 0; j < cols; ++j) mean += xr[j];
      mean /= cols;
      double var = 0.0;
      for (int j = 0; j < cols; ++j) {
        const double d = xr[j] - mean;
        var += d * d;
      }
      var /= cols;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int j = 0; j < cols; ++j) xhat[static_cast<size_t>(j)] = (xr[j] - mean) * inv;

      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      double* dxr = dx.row_ptr(i);
      for (int j = 0; j < cols; ++j) {
        const double dxhat = dyr[j] * gv2.data[static_cast<size_t>(j)];
        dxr[j] = dxhat;  // staging
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat[static_cast<size_t>(j)];
        dgain.data[static_cast<size_t>(j)] += dyr[j] * xhat[static_cast<size_t>(j)];
        dbias.data[static_cast<size_t>(j)] += dyr[j];
      }
      const double mean_dxhat = sum_dxhat / cols;
      const double mean_dxhat_xhat = sum_dxhat_xhat / cols;
      for (int j = 0; j < cols; ++j) {
        dxr[j] = inv * (dxr[j] - mean_dxhat - xhat[static_cast<size_t>(j)] * mean_dxhat_xhat);
      }
    }
    if (g.nodes_[xi].tracked) g.accumulate(xi, dx);
    if (g.nodes_[gi].tracked) g.accumulate(gi, dgain);
    if (g.nodes_[bi].tracked) g.accumulate(bi, dbias);
  });
  return Ref{idx};
}

Graph::Ref Graph::embedding_rows(Ref table, std::vector<int> ids) {
  const Tensor& tv = node(table).value;
  require(is_2d(tv), "embedding_rows: table must be 2-d");
  const int n = tv.cols();
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), n});
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.rows(), "embedding_rows: id out of range");
    for (int j = 0; j < n; ++j) out.at(static_cast<int>(i), j) = tv.at(ids[i], j);
  }
  const int ti = table.idx;
  const int idx = push(std::move(out), node(table).tracked,
                       [ti, ids = std::move(ids)](Graph& g, int self) {
                         if (!g.nodes_[ti].tracked) return;
                         const Tensor& dy = g.nodes_[self].grad;
                         Tensor& dt = g.grad_buffer(ti);
                         const int cols = dy.cols();
                         for (size_t i = 0; i < ids.size(); ++i) {
                           axpy(1.0, dy.row_ptr(static_cast<int>(i)), dt.row_ptr(ids[i]), cols);
                         }
                       });
  return Ref{idx};
}

Graph::Ref Graph::slice_cols(Ref a, int start, int len) {
  const Tensor& av = node(a).value;
  require(is_2d(av), "slice_cols: operand must be 2-d");
  require(start >= 0 && len > 0 && start + len <= av.cols(), "slice_cols: range out of bounds");
  const int rows = av.rows();
  Tensor out = Tensor::zeros({rows, len});
  for (int i = 0; i < rows; ++i) {
    const double* src = av.row_ptr(i) + start;
    double* dst = out.row_ptr(i);
    for (int j = 0; j < len; ++j) dst[j] = src[j];
  }
  const int ai = a.idx;
  const int idx = push(std::move(out), node(a).tracked, [ai, start, len](Graph& g, int self) {
    if (!g.nodes_[ai].tracked) return;
    const Tensor& dy = g.nodes_[self].grad;
    Tensor& da = g.grad_buffer(ai);
    for (int i = 0; i < dy.rows(); ++i) {
      axpy(1.0, dy.row_ptr(i), da.row_ptr(i) + start, len);
    }
  });
  return Ref{idx};
}

Graph::Ref Graph::concat_cols(const std::vector<Ref>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const int rows = node(parts[0]).value.rows();
  int total = 0;
  bool tracked = false;
  for (Ref p : parts) {
    const Tensor& pv = node(p).value;
    require(is_2d(pv) && pv.rows() == rows, "concat_cols: row count mismatch");
    total += pv.cols();
    tracked = tracked || node(p).tracked;
  }
  Tensor out = Tensor::zeros({rows, total});
  int off = 0;
  for (Ref p : parts) {
    const Tensor& pv = node(p).value;
    for (int i = 0; i < rows; ++i) {
      const double* src = pv.row_ptr(i);
      double* dst = out.row_ptr(i) + off;
      for (int j = 0; j < pv.cols(); ++j) dst[j] = src[j];
    }
    off += pv.cols();
  }
  std::vector<int> part_idx;
  std::vector<int> part_cols;
  for (Ref p : parts) {
    part_idx.push_back(p.idx);
    part_cols.push_back(node(p).value.cols());
  }
  const int idx = push(std::move(out), tracked,
                       [part_idx, part_cols](Graph& g, int self) {
                         const Tensor& dy = g.nodes_[self].grad;
                         int off2 = 0;
                         for (size_t pi = 0; pi < part_idx.size(); ++pi) {
                           const int cols = part_cols[pi];
                           if (g.nodes_[part_idx[pi]].tracked) {
                             Tensor& dp = g.grad_buffer(part_idx[pi]);
                             for (int i = 0; i < dy.rows(); ++i) {
                               axpy(1.0, dy.row_ptr(i) + off2, dp.row_ptr(i), cols);
                             }
                           }
                           off2 += cols;
                         }
                       });
  return Ref{idx};
}

Graph::Ref Graph::sum(Ref a) {
  const Tensor& av = node(a).value;
  double s = 0.0;
  for (double v : av.data) s += v;
  const int ai = a.idx;
  const int idx = push(Tensor::scalar(s), node(a).tracked, [ai](Graph& g, int self) {
    if (!g.nodes_[ai].tracked) return;
    const double gscale = g.nodes_[self].grad.data[0];
    Tensor da = Tensor::full(g.nodes_[ai].value.shape, gscale);
    g.accumulate(ai, da);
  });
  return Ref{idx};
}

Graph::Ref Graph::cross_entropy_sum(Ref logits, std::vector<int> rows, std::vector<int> targets) {
  const Tensor& lv = node(logits).value;
  require(is_2d(lv), "cross_entropy_sum: logits must be 2-d");
  require(rows.size() == targets.size(), "cross_entropy_sum: rows/targets size mismatch");
  const int vocab = lv.cols();
  double loss = 0.0;
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < lv.rows(), "cross_entropy_sum: row out of range");
    require(targets[i] >= 0 && targets[i] < vocab, "cross_entropy_sum: target out of range");
    const double* lr = lv.row_ptr(rows[i]);
    loss += row_logsumexp(lr, vocab) - lr[targets[i]];
  }
  const int li = logits.idx;
  const int idx = push(Tensor::scalar(loss), node(logits).tracked,
                       [li, rows = std::move(rows), targets = std::move(targets)](Graph& g,
                                                                                  int self) {
                         if (!g.nodes_[li].tracked) return;
                         const double gscale = g.nodes_[self].grad.data[0];
                         const Tensor& lv2 = g.nodes_[li].value;
                         Tensor& dl = g.grad_buffer(li);
                         const int vocab = lv2.cols();
                         std::vector<double> probs(static_cast<size_t>(vocab));
                         for (size_t i = 0; i < rows.size(); ++i) {
                           row_softmax(lv2.row_ptr(rows[i]), probs.data(), vocab);
                           double* drow = dl.row_ptr(rows[i]);
                           axpy(gscale, probs.data(), drow, vocab);
                           drow[targets[i]] -= gscale;
                         }
                       });
  return Ref{idx};
}

const Tensor& Graph::value(Ref r) const { return node(r).value; }

void Graph::backward(Ref loss) {
  Node& ln = node(loss);
  if (!ln.value.is_scalar()) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(ln.value.shape));
  }
  ran_backward_ = true;
  grad_buffer(loss.idx).data[0] = 1.0;
  for (int idx = loss.idx; idx >= 0; --idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (n.tracked && n.grad_live && n.backprop) n.backprop(*this, idx);
  }
  // Inputs the loss never reached still report zero gradients.
  for (auto& n : nodes_) {
    if (n.tracked && !n.backprop && !n.grad_live) {
      n.grad = Tensor::zeros(n.value.shape);
      n.grad_live = true;
    }
  }
}

const Tensor* Graph::grad(Ref r) const {
  const Node& n = node(r);
  if (!ran_backward_ || !n.grad_live) return nullptr;
  return &n.grad;
}

}  // namespace secokd::numerics
