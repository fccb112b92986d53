#pragma once

#include <cmath>
#include <string>

#include "hicross/numerics/rng.hpp"
#include "hicross/numerics/tensor.hpp"

namespace hicross::init {

// Each parameter draws from its own stream keyed by (seed, name), so two
// models that share parameter names get identical values for them no matter
// which other modules were constructed.

template <class T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed, const std::string& name) {
  Rng rng(seed, name);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t({fan_in, fan_out});
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-a, a));
  return t;
}

template <class T>
Tensor<T> normal(Shape shape, double stddev, std::uint64_t seed, const std::string& name) {
  Rng rng(seed, name);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

template <class T>
Tensor<T> constant(Shape shape, T value) {
  return Tensor<T>(std::move(shape), value);
}

}  // namespace hicross::init
