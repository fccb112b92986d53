#pragma once

#include <cmath>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "hicross/numerics/tape.hpp"

namespace hicross::harness {

/// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to 0
/// at `total`. lr(0) = 0, lr(warmup) = peak, lr(total) = 0.
inline double lr_at(std::size_t step, std::size_t warmup, std::size_t total, double peak) {
  if (step >= total) return 0.0;
  if (warmup > 0 && step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double span = static_cast<double>(total - warmup);
  const double progress = span > 0 ? static_cast<double>(step - warmup) / span : 1.0;
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-5;
  double weight_decay = 0.05;
};

/// Decoupled-weight-decay Adam. Frozen parameters are skipped entirely, so
/// their values and moment buffers never change. Decay applies to matrices only.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

  void step(ParamStore<T>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : params) {
      if (p.frozen) continue;
      auto& st = state_[p.name];
      if (st.m.empty()) {
        st.m.assign(p.value.size(), 0.0);
        st.v.assign(p.value.size(), 0.0);
      }
      const bool decay = p.value.rank() >= 2 && cfg_.weight_decay > 0.0;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = st.m[i] / bc1, vhat = st.v[i] / bc2;
        double w = static_cast<double>(p.value[i]);
        if (decay) w -= lr * cfg_.weight_decay * w;
        w -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        p.value[i] = static_cast<T>(w);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  struct State {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, State> state_;
};

}  // namespace hicross::harness
