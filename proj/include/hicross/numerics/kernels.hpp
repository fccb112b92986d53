#pragma once

// Pure dense kernels. Every function here is stateless apart from the optional
// FlopCounter, so concurrent calls on distinct outputs are safe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "hicross/numerics/flops.hpp"
#include "hicross/numerics/tensor.hpp"

namespace hicross::kernels {

/// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T{0}) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

/// C[m,n] (+)= A[k,m]^T * B[k,n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a + p * m;
    const T* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = ap[i];
      if (av == T{0}) continue;
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

/// C[m,n] (+)= A[m,k] * B[n,k]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

inline std::uint64_t matmul_flops(std::size_t m, std::size_t k, std::size_t n) {
  return 2ULL * m * k * n;
}

/// Standard 2-D product. Reports 2*m*k*n FLOPs under `category`.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, FlopCounter* counter = nullptr,
                 const std::string& category = "matmul") {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  gemm_nn(a.ptr(), b.ptr(), c.ptr(), m, k, n);
  if (counter) counter->add(category, matmul_flops(m, k, n));
  return c;
}

/// Row-wise softmax over contiguous rows of length n, with max subtraction.
template <class T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t n) {
  if (n == 0) throw DimensionError("softmax over an empty axis");
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in + r * n;
    T* y = out + r * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
    T sum{0};
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = (x[j] == -std::numeric_limits<T>::infinity()) ? T{0} : std::exp(x[j] - mx);
      sum += y[j];
    }
    const T inv = T{1} / sum;
    for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
  }
}

/// Softmax along the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  softmax_rows(x.ptr(), y.ptr(), x.rows(), x.cols());
  return y;
}

/// Per-row statistics kept for the layernorm backward pass.
template <class T>
struct LayerNormCache {
  std::vector<T> mean;
  std::vector<T> rstd;
};

template <class T>
void layernorm_forward(const T* x, const T* gain, const T* bias, T* y, std::size_t rows,
                       std::size_t d, T eps, LayerNormCache<T>* cache = nullptr) {
  if (d == 1 && eps <= T{0})
    throw NumericError("layernorm over a single feature with eps=0 divides by zero");
  if (cache) {
    cache->mean.resize(rows);
    cache->rstd.resize(rows);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    T* yr = y + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * rstd * gain[j] + bias[j];
    if (cache) {
      cache->mean[r] = mean;
      cache->rstd[r] = rstd;
    }
  }
}

template <class T>
void layernorm_backward(const T* x, const T* gain, const T* dy, const LayerNormCache<T>& cache,
                        T* dx, T* dgain, T* dbias, std::size_t rows, std::size_t d) {
  std::vector<T> g(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    const T* dyr = dy + r * d;
    const T mean = cache.mean[r], rstd = cache.rstd[r];
    T sum_g{0}, sum_gx{0};
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (xr[j] - mean) * rstd;
      g[j] = dyr[j] * gain[j];
      sum_g += g[j];
      sum_gx += g[j] * xhat;
      if (dgain) dgain[j] += dyr[j] * xhat;
      if (dbias) dbias[j] += dyr[j];
    }
    if (dx) {
      T* dxr = dx + r * d;
      const T inv_d = T{1} / static_cast<T>(d);
      for (std::size_t j = 0; j < d; ++j) {
        const T xhat = (xr[j] - mean) * rstd;
        dxr[j] += rstd * (g[j] - sum_g * inv_d - xhat * sum_gx * inv_d);
      }
    }
  }
}

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
  const std::size_t d = x.cols();
  require(gain.size() == d && bias.size() == d, "layernorm gain/bias size must equal feature dim");
  Tensor<T> y(x.shape());
  layernorm_forward(x.ptr(), gain.ptr(), bias.ptr(), y.ptr(), x.rows(), d, eps);
  if (!y.all_finite()) throw NumericError("layernorm produced non-finite values");
  return y;
}

/// Exact (erf) GELU.
template <class T>
T gelu(T x) {
  return T(0.5) * x * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T{2} * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

/// Geometry of a batched multi-head attention call. Q rows are laid out as
/// [batch * q_len, heads * head_dim]; K as [batch * k_len, heads * head_dim];
/// V as [batch * k_len, heads * v_dim].
///
/// With `causal` set, query i may see key j iff j <= max(i, prefix - 1): the
/// first `prefix` positions see each other fully, later positions are causal.
struct AttnGeometry {
  std::size_t batch = 1;
  std::size_t q_len = 1;
  std::size_t k_len = 1;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  std::size_t v_dim = 1;
  bool causal = false;
  std::size_t prefix = 0;

  bool allowed(std::size_t i, std::size_t j) const {
    if (!causal) return true;
    const std::size_t lim = std::max(i, prefix == 0 ? std::size_t{0} : prefix - 1);
    return j <= lim;
  }

  std::uint64_t flops() const {
    const std::uint64_t pairs = static_cast<std::uint64_t>(batch) * heads * q_len * k_len;
    return pairs * (2ULL * head_dim + kSoftmaxFlopsPerElement + 2ULL * v_dim);
  }
};

/// Multi-head scaled dot-product attention. Writes the output and the
/// attention probabilities [batch, heads, q_len, k_len].
template <class T>
void attention_forward(const T* q, const T* k, const T* v, T* out, T* probs, const AttnGeometry& g) {
  if (g.k_len == 0) throw DimensionError("attention over zero keys");
  const std::size_t qw = g.heads * g.head_dim, vw = g.heads * g.v_dim;
  const T scale = T{1} / std::sqrt(static_cast<T>(g.head_dim));
  std::vector<T> qh(g.q_len * g.head_dim), kh(g.k_len * g.head_dim), vh(g.k_len * g.v_dim),
      oh(g.q_len * g.v_dim), sc(g.q_len * g.k_len);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      for (std::size_t i = 0; i < g.q_len; ++i)
        std::copy_n(q + (b * g.q_len + i) * qw + h * g.head_dim, g.head_dim, &qh[i * g.head_dim]);
      for (std::size_t j = 0; j < g.k_len; ++j) {
        std::copy_n(k + (b * g.k_len + j) * qw + h * g.head_dim, g.head_dim, &kh[j * g.head_dim]);
        std::copy_n(v + (b * g.k_len + j) * vw + h * g.v_dim, g.v_dim, &vh[j * g.v_dim]);
      }
      gemm_nt(qh.data(), kh.data(), sc.data(), g.q_len, g.head_dim, g.k_len);
      for (std::size_t i = 0; i < g.q_len; ++i)
        for (std::size_t j = 0; j < g.k_len; ++j)
          sc[i * g.k_len + j] = g.allowed(i, j) ? sc[i * g.k_len + j] * scale
                                                : -std::numeric_limits<T>::infinity();
      T* p = probs + (b * g.heads + h) * g.q_len * g.k_len;
      softmax_rows(sc.data(), p, g.q_len, g.k_len);
      gemm_nn(p, vh.data(), oh.data(), g.q_len, g.k_len, g.v_dim);
      for (std::size_t i = 0; i < g.q_len; ++i)
        std::copy_n(&oh[i * g.v_dim], g.v_dim, out + (b * g.q_len + i) * vw + h * g.v_dim);
    }
  }
}

/// Accumulates dQ, dK, dV (any may be null) from dOut and saved probabilities.
template <class T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, const AttnGeometry& g) {
  const std::size_t qw = g.heads * g.head_dim, vw = g.heads * g.v_dim;
  const T scale = T{1} / std::sqrt(static_cast<T>(g.head_dim));
  std::vector<T> qh(g.q_len * g.head_dim), kh(g.k_len * g.head_dim), vh(g.k_len * g.v_dim),
      doh(g.q_len * g.v_dim), dp(g.q_len * g.k_len), tmp_q(g.q_len * g.head_dim),
      tmp_k(g.k_len * g.head_dim), tmp_v(g.k_len * g.v_dim);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      for (std::size_t i = 0; i < g.q_len; ++i) {
        std::copy_n(q + (b * g.q_len + i) * qw + h * g.head_dim, g.head_dim, &qh[i * g.head_dim]);
        std::copy_n(dout + (b * g.q_len + i) * vw + h * g.v_dim, g.v_dim, &doh[i * g.v_dim]);
      }
      for (std::size_t j = 0; j < g.k_len; ++j) {
        std::copy_n(k + (b * g.k_len + j) * qw + h * g.head_dim, g.head_dim, &kh[j * g.head_dim]);
        std::copy_n(v + (b * g.k_len + j) * vw + h * g.v_dim, g.v_dim, &vh[j * g.v_dim]);
      }
      const T* p = probs + (b * g.heads + h) * g.q_len * g.k_len;
      if (dv) {
        gemm_tn(p, doh.data(), tmp_v.data(), g.k_len, g.q_len, g.v_dim);
        for (std::size_t j = 0; j < g.k_len; ++j)
          for (std::size_t c = 0; c < g.v_dim; ++c)
            dv[(b * g.k_len + j) * vw + h * g.v_dim + c] += tmp_v[j * g.v_dim + c];
      }
      if (!dq && !dk) continue;
      gemm_nt(doh.data(), vh.data(), dp.data(), g.q_len, g.v_dim, g.k_len);
      for (std::size_t i = 0; i < g.q_len; ++i) {
        T dot{0};
        for (std::size_t j = 0; j < g.k_len; ++j) dot += dp[i * g.k_len + j] * p[i * g.k_len + j];
        for (std::size_t j = 0; j < g.k_len; ++j)
          dp[i * g.k_len + j] = p[i * g.k_len + j] * (dp[i * g.k_len + j] - dot) * scale;
      }
      if (dq) {
        gemm_nn(dp.data(), kh.data(), tmp_q.data(), g.q_len, g.k_len, g.head_dim);
        for (std::size_t i = 0; i < g.q_len; ++i)
          for (std::size_t c = 0; c < g.head_dim; ++c)
            dq[(b * g.q_len + i) * qw + h * g.head_dim + c] += tmp_q[i * g.head_dim + c];
      }
      if (dk) {
        gemm_tn(dp.data(), qh.data(), tmp_k.data(), g.k_len, g.q_len, g.head_dim);
        for (std::size_t j = 0; j < g.k_len; ++j)
          for (std::size_t c = 0; c < g.head_dim; ++c)
            dk[(b * g.k_len + j) * qw + h * g.head_dim + c] += tmp_k[j * g.head_dim + c];
      }
    }
  }
}

/// Single-head softmax(Q K^T / sqrt(d)) V.
template <class T>
Tensor<T> sdpa(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal = false,
               FlopCounter* counter = nullptr) {
  require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "sdpa expects rank-2 Q, K, V");
  require(q.dim(1) == k.dim(1), "sdpa: Q and K head dims differ");
  require(k.dim(0) == v.dim(0), "sdpa: K and V lengths differ");
  AttnGeometry g{1, q.dim(0), k.dim(0), 1, q.dim(1), v.dim(1), causal, 0};
  Tensor<T> out({g.q_len, g.v_dim});
  std::vector<T> probs(g.q_len * g.k_len);
  attention_forward(q.ptr(), k.ptr(), v.ptr(), out.ptr(), probs.data(), g);
  if (counter) counter->add("attn", g.flops());
  return out;
}

}  // namespace hicross::kernels
