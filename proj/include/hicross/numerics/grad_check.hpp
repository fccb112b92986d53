#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "hicross/numerics/tape.hpp"

namespace hicross {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

/// Compares tape gradients against central differences for every element of
/// every selected, non-frozen parameter. `loss` builds a scalar on a fresh
/// tape from the current parameter values.
///
/// rel error = |analytic - numeric| / max(1, |numeric|)
template <class Loss>
GradCheckResult grad_check(Loss&& loss, ParamStore<double>& params, double h = 1e-5,
                           const std::function<bool(const Parameter<double>&)>& select = nullptr) {
  auto eval = [&]() {
    Tape<double> tape;
    Var out = loss(tape);
    const double v = tape.value(out)[0];
    if (!std::isfinite(v)) throw NumericError("grad_check aborted: non-finite loss");
    return v;
  };

  params.zero_grad();
  {
    Tape<double> tape;
    Var out = loss(tape);
    if (!std::isfinite(tape.value(out)[0])) throw NumericError("grad_check aborted: non-finite loss");
    tape.backward(out);
  }

  GradCheckResult res;
  for (auto& p : params) {
    if (p.frozen || (select && !select(p))) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double fp = eval();
      p.value[i] = orig - h;
      const double fm = eval();
      p.value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double rel = std::abs(p.grad[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p.name + "[" + std::to_string(i) + "]";
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace hicross
