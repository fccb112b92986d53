#pragma once

#include <cstdint>

namespace hicross::cost {

/// Token counts and head geometry of one decoder layer's attention.
struct AttnCostInputs {
  double low_tokens = 256;    // low-resolution image tokens
  double high_tokens = 6400;  // high-resolution image tokens
  double text_tokens = 0;
  double cross_heads = 32;
  double cross_head_dim = 32;
  double dec_heads = 32;
  double dec_head_dim = 128;

  double cross_width() const { return cross_heads * cross_head_dim; }
  double dec_width() const { return dec_heads * dec_head_dim; }
};

/// Normalized (constant factor 1) attention cost with the cross module:
/// (L_lo + L_T) * L_hi * H_cross * d_cross + (L_lo + L_T)^2 * H_dec * d_dec
inline double attn_flops_improved(const AttnCostInputs& c) {
  const double s = c.low_tokens + c.text_tokens;
  return s * c.high_tokens * c.cross_width() + s * s * c.dec_width();
}

/// Normalized attention cost when high-resolution tokens go straight into
/// the decoder: (L_hi + L_T)^2 * H_dec * d_dec
inline double attn_flops_original(const AttnCostInputs& c) {
  const double s = c.high_tokens + c.text_tokens;
  return s * s * c.dec_width();
}

struct CostReport {
  double t_improved = 0;
  double t_original = 0;
  double reduction_factor = 0;  // via the factored form
  double direct_ratio = 0;      // t_original / t_improved by plain division
  double lower_bound = 0;       // (L_hi + L_T) / (L_lo + L_T)
  double case1_approx = 0;      // L_hi / (L_lo + L_T)
  /// Whether reduction_factor >= lower_bound for these inputs. This needs
  /// L_hi * (r - 1) >= L_lo * r with r = H_dec d_dec / (H_cross d_cross).
  bool bound_holds = false;
};

/// Reduction factor T_original / T_improved computed as
///   (L_hi+L_T)/(L_lo+L_T) * (L_hi+L_T) r / (L_hi + (L_lo+L_T) r)
/// with r = H_dec d_dec / (H_cross d_cross).
inline CostReport reduction_factor(const AttnCostInputs& c) {
  CostReport rep;
  rep.t_improved = attn_flops_improved(c);
  rep.t_original = attn_flops_original(c);
  const double lo = c.low_tokens + c.text_tokens, hi = c.high_tokens + c.text_tokens;
  const double r = c.dec_width() / c.cross_width();
  rep.lower_bound = hi / lo;
  rep.case1_approx = c.high_tokens / lo;
  rep.reduction_factor = rep.lower_bound * (hi * r) / (c.high_tokens + lo * r);
  rep.direct_ratio = rep.t_original / rep.t_improved;
  rep.bound_holds = rep.reduction_factor >= rep.lower_bound;
  return rep;
}

/// Sufficient and necessary condition for the lower bound, evaluated without
/// forming the ratio: L_hi (r - 1) >= L_lo r.
inline bool lower_bound_condition(const AttnCostInputs& c) {
  const double r = c.dec_width() / c.cross_width();
  return c.high_tokens * (r - 1.0) >= c.low_tokens * r;
}

/// Absolute attention-core FLOPs (QK^T, softmax, AV; projections excluded)
/// for `layers` decoder layers and `batch` samples: 2 FLOPs per multiply-add
/// and 5 FLOPs per softmax element. Matches the kernel counters.
struct AttentionFlops {
  std::uint64_t self = 0;
  std::uint64_t cross = 0;
  std::uint64_t total() const { return self + cross; }
};

inline AttentionFlops attention_core_flops(std::uint64_t low_tokens, std::uint64_t high_tokens,
                                           std::uint64_t text_tokens, std::uint64_t dec_heads,
                                           std::uint64_t dec_head_dim, std::uint64_t cross_heads,
                                           std::uint64_t cross_head_dim, std::uint64_t layers, std::uint64_t batch,
                                           bool with_cross) {
  const std::uint64_t s = low_tokens + text_tokens;
  AttentionFlops f;
  f.self = layers * batch * dec_heads * s * s * (4 * dec_head_dim + 5);
  if (with_cross) f.cross = layers * batch * cross_heads * s * high_tokens * (4 * cross_head_dim + 5);
  return f;
}

}  // namespace hicross::cost
