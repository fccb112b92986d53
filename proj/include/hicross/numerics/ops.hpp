#pragma once

// Differentiable operations recorded on a Tape. Activations are handled as
// 2-D [rows, features] tensors; sequence structure is passed explicitly.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hicross/numerics/kernels.hpp"
#include "hicross/numerics/tape.hpp"

namespace hicross::ops {

template <class T>
Var matmul(Tape<T>& tape, Var a, Var b, const std::string& category = "matmul") {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  Tensor<T> out = kernels::matmul(av.reshaped({av.rows(), av.cols()}), bv, tape.counter(), category);
  if (av.rank() != 2) out = out.reshaped([&] { Shape s = av.shape(); s.back() = bv.dim(1); return s; }());
  const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
  return tape.push("matmul", std::move(out), ng, [a, b](Tape<T>& t, std::size_t self) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    const auto& G = t.grad(self);
    const std::size_t m = A.rows(), k = A.cols(), n = B.dim(1);
    if (t.needs_grad(a)) kernels::gemm_nt(G.ptr(), B.ptr(), t.grad(a).ptr(), m, n, k, true);
    if (t.needs_grad(b)) kernels::gemm_tn(A.ptr(), G.ptr(), t.grad(b).ptr(), k, m, n, true);
  });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require(av.shape() == bv.shape(), "add shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
  return tape.push("add", std::move(out), ng, [a, b](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    for (Var v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      auto& g = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
  });
}

/// x[rows, n] + bias[n] broadcast over rows.
template <class T>
Var add_bias(Tape<T>& tape, Var x, Var bias) {
  const auto& xv = tape.value(x);
  const auto& bv = tape.value(bias);
  require(bv.size() == xv.cols(), "add_bias: bias length must equal feature dim");
  Tensor<T> out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  const bool ng = tape.needs_grad(x) || tape.needs_grad(bias);
  return tape.push("add_bias", std::move(out), ng, [x, bias](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.needs_grad(x)) {
      auto& g = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
    if (t.needs_grad(bias)) {
      auto& gb = t.grad(bias);
      const std::size_t n = gb.size();
      for (std::size_t i = 0; i < G.size(); ++i) gb[i % n] += G[i];
    }
  });
}

template <class T>
Var scale(Tape<T>& tape, Var x, T s) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v *= s;
  return tape.push("scale", std::move(out), tape.needs_grad(x), [x, s](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * G[i];
  });
}

template <class T>
Var gelu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v = kernels::gelu(v);
  return tape.push("gelu", std::move(out), tape.needs_grad(x), [x](Tape<T>& t, std::size_t self) {
    const auto& X = t.value(x);
    const auto& G = t.grad(self);
    auto& g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * kernels::gelu_grad(X[i]);
  });
}

template <class T>
Var layernorm(Tape<T>& tape, Var x, Var gain, Var bias, T eps = T(1e-5)) {
  const auto& xv = tape.value(x);
  const std::size_t d = xv.cols(), rows = xv.rows();
  require(tape.value(gain).size() == d && tape.value(bias).size() == d,
          "layernorm gain/bias size must equal feature dim");
  auto cache = std::make_shared<kernels::LayerNormCache<T>>();
  Tensor<T> out(xv.shape());
  kernels::layernorm_forward(xv.ptr(), tape.value(gain).ptr(), tape.value(bias).ptr(), out.ptr(), rows, d, eps,
                             cache.get());
  const bool ng = tape.needs_grad(x) || tape.needs_grad(gain) || tape.needs_grad(bias);
  return tape.push("layernorm", std::move(out), ng, [x, gain, bias, cache](Tape<T>& t, std::size_t self) {
    const auto& X = t.value(x);
    const std::size_t d = X.cols();
    T* dx = t.needs_grad(x) ? t.grad(x).ptr() : nullptr;
    T* dg = t.needs_grad(gain) ? t.grad(gain).ptr() : nullptr;
    T* db = t.needs_grad(bias) ? t.grad(bias).ptr() : nullptr;
    kernels::layernorm_backward(X.ptr(), t.value(gain).ptr(), t.grad(self).ptr(), *cache, dx, dg, db, X.rows(), d);
  });
}

/// Softmax along the last axis.
template <class T>
Var softmax(Tape<T>& tape, Var x) {
  Tensor<T> out = kernels::softmax(tape.value(x));
  return tape.push("softmax", std::move(out), tape.needs_grad(x), [x](Tape<T>& t, std::size_t self) {
    const auto& Y = t.value(Var{self});
    const auto& G = t.grad(self);
    auto& g = t.grad(x);
    const std::size_t n = Y.cols();
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += G[r * n + j] * Y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += Y[r * n + j] * (G[r * n + j] - dot);
    }
  });
}

/// Batched multi-head attention; see kernels::AttnGeometry for layouts.
template <class T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, const kernels::AttnGeometry& g,
              const std::string& category = "attn") {
  const auto& qv = tape.value(q);
  const auto& kv = tape.value(k);
  const auto& vv = tape.value(v);
  require(qv.rows() == g.batch * g.q_len && qv.cols() == g.heads * g.head_dim, "attention: Q layout mismatch");
  require(kv.rows() == g.batch * g.k_len && kv.cols() == g.heads * g.head_dim, "attention: K layout mismatch");
  require(vv.rows() == g.batch * g.k_len && vv.cols() == g.heads * g.v_dim, "attention: V layout mismatch");
  auto probs = std::make_shared<std::vector<T>>(g.batch * g.heads * g.q_len * g.k_len);
  Tensor<T> out({g.batch * g.q_len, g.heads * g.v_dim});
  kernels::attention_forward(qv.ptr(), kv.ptr(), vv.ptr(), out.ptr(), probs->data(), g);
  if (tape.counter()) tape.counter()->add(category, g.flops());
  const bool ng = tape.needs_grad(q) || tape.needs_grad(k) || tape.needs_grad(v);
  return tape.push("attention", std::move(out), ng, [q, k, v, g, probs](Tape<T>& t, std::size_t self) {
    T* dq = t.needs_grad(q) ? t.grad(q).ptr() : nullptr;
    T* dk = t.needs_grad(k) ? t.grad(k).ptr() : nullptr;
    T* dv = t.needs_grad(v) ? t.grad(v).ptr() : nullptr;
    kernels::attention_backward(t.value(q).ptr(), t.value(k).ptr(), t.value(v).ptr(), probs->data(),
                                t.grad(self).ptr(), dq, dk, dv, g);
  });
}

/// Row gather from an embedding table [vocab, d].
template <class T>
Var embedding(Tape<T>& tape, Var table, const std::vector<int>& ids) {
  const auto& tv = tape.value(table);
  const std::size_t d = tv.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows())
      throw DimensionError("token id " + std::to_string(ids[r]) + " outside vocabulary of " +
                           std::to_string(tv.rows()));
    std::copy_n(tv.ptr() + ids[r] * d, d, out.ptr() + r * d);
  }
  return tape.push("embedding", std::move(out), tape.needs_grad(table), [table, ids](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& g = t.grad(table);
    const std::size_t d = g.cols();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g[ids[r] * d + j] += G[r * d + j];
  });
}

/// Adds a per-position table [len, d] to every sequence of x [batch*len, d].
template <class T>
Var add_positional(Tape<T>& tape, Var x, Var table, std::size_t len) {
  const auto& xv = tape.value(x);
  const auto& pv = tape.value(table);
  const std::size_t d = xv.cols();
  require(pv.cols() == d && pv.rows() >= len, "positional table too small");
  require(xv.rows() % len == 0, "positional: rows not a multiple of sequence length");
  Tensor<T> out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += pv[(r % len) * d + j];
  const bool ng = tape.needs_grad(x) || tape.needs_grad(table);
  return tape.push("add_positional", std::move(out), ng, [x, table, len](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.needs_grad(x)) {
      auto& g = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
    if (t.needs_grad(table)) {
      auto& g = t.grad(table);
      const std::size_t d = g.cols();
      for (std::size_t r = 0; r < G.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) g[(r % len) * d + j] += G[r * d + j];
    }
  });
}

/// Columns [start, start+len) of x [rows, n].
template <class T>
Var slice_cols(Tape<T>& tape, Var x, std::size_t start, std::size_t len) {
  const auto& xv = tape.value(x);
  const std::size_t n = xv.cols(), rows = xv.rows();
  require(start + len <= n, "slice_cols out of range");
  Tensor<T> out({rows, len});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.ptr() + r * n + start, len, out.ptr() + r * len);
  return tape.push("slice_cols", std::move(out), tape.needs_grad(x), [x, start, len](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& g = t.grad(x);
    const std::size_t n = g.cols();
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t j = 0; j < len; ++j) g[r * n + start + j] += G[r * len + j];
  });
}

/// Per batch element, concatenates a [batch*la, d] and b [batch*lb, d] along
/// the sequence axis into [batch*(la+lb), d].
template <class T>
Var concat_seq(Tape<T>& tape, Var a, Var b, std::size_t batch, std::size_t la, std::size_t lb) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  const std::size_t d = av.cols();
  require(bv.cols() == d, "concat_seq feature dims differ");
  require(av.rows() == batch * la && bv.rows() == batch * lb, "concat_seq row counts mismatch");
  Tensor<T> out({batch * (la + lb), d});
  for (std::size_t s = 0; s < batch; ++s) {
    std::copy_n(av.ptr() + s * la * d, la * d, out.ptr() + s * (la + lb) * d);
    std::copy_n(bv.ptr() + s * lb * d, lb * d, out.ptr() + (s * (la + lb) + la) * d);
  }
  const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
  return tape.push("concat_seq", std::move(out), ng, [a, b, batch, la, lb](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const std::size_t d = G.cols();
    for (std::size_t s = 0; s < batch; ++s) {
      if (t.needs_grad(a)) {
        auto& g = t.grad(a);
        for (std::size_t i = 0; i < la * d; ++i) g[s * la * d + i] += G[s * (la + lb) * d + i];
      }
      if (t.needs_grad(b)) {
        auto& g = t.grad(b);
        for (std::size_t i = 0; i < lb * d; ++i) g[s * lb * d + i] += G[(s * (la + lb) + la) * d + i];
      }
    }
  });
}

/// Per batch element, positions [start, start+len) of a [batch*seq, d] input.
template <class T>
Var slice_seq(Tape<T>& tape, Var x, std::size_t batch, std::size_t seq, std::size_t start, std::size_t len) {
  const auto& xv = tape.value(x);
  const std::size_t d = xv.cols();
  require(xv.rows() == batch * seq && start + len <= seq, "slice_seq out of range");
  Tensor<T> out({batch * len, d});
  for (std::size_t s = 0; s < batch; ++s)
    std::copy_n(xv.ptr() + (s * seq + start) * d, len * d, out.ptr() + s * len * d);
  return tape.push("slice_seq", std::move(out), tape.needs_grad(x),
                   [x, batch, seq, start, len](Tape<T>& t, std::size_t self) {
                     const auto& G = t.grad(self);
                     auto& g = t.grad(x);
                     const std::size_t d = G.cols();
                     for (std::size_t s = 0; s < batch; ++s)
                       for (std::size_t i = 0; i < len * d; ++i) g[(s * seq + start) * d + i] += G[s * len * d + i];
                   });
}

/// Row-wise routing: out[r] = mask[r] ? a[r] : b[r].
template <class T>
Var select_rows(Tape<T>& tape, const std::vector<std::uint8_t>& mask, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require(av.shape() == bv.shape(), "select_rows operands differ in shape");
  require(mask.size() == av.rows(), "select_rows mask length mismatch");
  const std::size_t d = av.cols();
  Tensor<T> out(av.shape());
  for (std::size_t r = 0; r < mask.size(); ++r)
    std::copy_n((mask[r] ? av : bv).ptr() + r * d, d, out.ptr() + r * d);
  const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
  return tape.push("select_rows", std::move(out), ng, [mask, a, b](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const std::size_t d = G.cols();
    for (std::size_t r = 0; r < mask.size(); ++r) {
      Var src = mask[r] ? a : b;
      if (!t.needs_grad(src)) continue;
      auto& g = t.grad(src);
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += G[r * d + j];
    }
  });
}

/// Rows `idx` of x, in order.
template <class T>
Var gather_rows(Tape<T>& tape, Var x, const std::vector<std::size_t>& idx) {
  const auto& xv = tape.value(x);
  require(!idx.empty(), "gather_rows: empty index list");
  const std::size_t d = xv.cols();
  Tensor<T> out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < xv.rows(), "gather_rows: index out of range");
    std::copy_n(xv.ptr() + idx[i] * d, d, out.ptr() + i * d);
  }
  return tape.push("gather_rows", std::move(out), tape.needs_grad(x), [x, idx](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& g = t.grad(x);
    const std::size_t d = G.cols();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += G[i * d + j];
  });
}

/// Interleaves two row sets: output row r is the next unused row of `a`
/// when mask[r] is set, else the next unused row of `b`. Either side may be
/// absent when the mask never selects it.
template <class T>
Var merge_rows(Tape<T>& tape, const std::vector<std::uint8_t>& mask, std::optional<Var> a, std::optional<Var> b) {
  std::size_t na = 0;
  for (auto m : mask) na += m ? 1 : 0;
  const std::size_t nb = mask.size() - na;
  require((na == 0) == !a.has_value() && (nb == 0) == !b.has_value(), "merge_rows: operand presence must match mask");
  require(!mask.empty(), "merge_rows: empty mask");
  const std::size_t d = tape.value(a ? *a : *b).cols();
  if (a) require(tape.value(*a).rows() == na && tape.value(*a).cols() == d, "merge_rows: first operand shape");
  if (b) require(tape.value(*b).rows() == nb && tape.value(*b).cols() == d, "merge_rows: second operand shape");
  Tensor<T> out({mask.size(), d});
  std::size_t ia = 0, ib = 0;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    const T* src = mask[r] ? tape.value(*a).ptr() + ia++ * d : tape.value(*b).ptr() + ib++ * d;
    std::copy_n(src, d, out.ptr() + r * d);
  }
  const bool ng = (a && tape.needs_grad(*a)) || (b && tape.needs_grad(*b));
  return tape.push("merge_rows", std::move(out), ng, [mask, a, b](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const std::size_t d = G.cols();
    const bool ga = a && t.needs_grad(*a), gb = b && t.needs_grad(*b);
    std::size_t ia = 0, ib = 0;
    for (std::size_t r = 0; r < mask.size(); ++r) {
      const std::size_t i = mask[r] ? ia++ : ib++;
      if (mask[r] ? !ga : !gb) continue;
      auto& g = t.grad(mask[r] ? *a : *b);
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += G[r * d + j];
    }
  });
}

/// Weighted mean token cross-entropy. logits [n, vocab]; rows with weight 0
/// are ignored. Returns a scalar.
template <class T>
Var cross_entropy(Tape<T>& tape, Var logits, const std::vector<int>& targets, const std::vector<T>& weights) {
  const auto& lv = tape.value(logits);
  const std::size_t n = lv.rows(), v = lv.cols();
  require(targets.size() == n && weights.size() == n, "cross_entropy target/weight length mismatch");
  auto probs = std::make_shared<Tensor<T>>(kernels::softmax(lv.reshaped({n, v})));
  T wsum{0}, loss{0};
  for (std::size_t r = 0; r < n; ++r) {
    if (weights[r] == T{0}) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v)
      throw DimensionError("cross_entropy target outside vocabulary");
    wsum += weights[r];
    loss -= weights[r] * std::log(std::max((*probs)[r * v + targets[r]], std::numeric_limits<T>::min()));
  }
  if (wsum <= T{0}) throw DimensionError("cross_entropy: no weighted targets");
  Tensor<T> out({1}, {loss / wsum});
  return tape.push("cross_entropy", std::move(out), tape.needs_grad(logits),
                   [logits, targets, weights, probs, wsum](Tape<T>& t, std::size_t self) {
                     const T gs = t.grad(self)[0] / wsum;
                     auto& g = t.grad(logits);
                     const std::size_t v = probs->cols();
                     for (std::size_t r = 0; r < targets.size(); ++r) {
                       if (weights[r] == T{0}) continue;
                       const T w = gs * weights[r];
                       for (std::size_t j = 0; j < v; ++j) g[r * v + j] += w * (*probs)[r * v + j];
                       g[r * v + targets[r]] -= w;
                     }
                   });
}

/// sum_i x_i * w_i; a fixed random w turns any tensor into a test scalar.
template <class T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& w) {
  const auto& xv = tape.value(x);
  require(w.size() == xv.size(), "weighted_sum weight size mismatch");
  T s{0};
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * w[i];
  return tape.push("weighted_sum", Tensor<T>({1}, {s}), tape.needs_grad(x), [x, w](Tape<T>& t, std::size_t self) {
    const T gs = t.grad(self)[0];
    auto& g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs * w[i];
  });
}

template <class T>
Var sum(Tape<T>& tape, Var x) {
  return weighted_sum(tape, x, Tensor<T>(tape.value(x).shape(), T{1}));
}

template <class T>
Var square(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v *= v;
  return tape.push("square", std::move(out), tape.needs_grad(x), [x](Tape<T>& t, std::size_t self) {
    const auto& X = t.value(x);
    const auto& G = t.grad(self);
    auto& g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T{2} * X[i] * G[i];
  });
}

}  // namespace hicross::ops
