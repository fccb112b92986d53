#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "hicross/numerics/grad_check.hpp"
#include "hicross/numerics/init.hpp"
#include "hicross/numerics/kernels.hpp"
#include "hicross/numerics/ops.hpp"
#include "hicross/numerics/rng.hpp"

using namespace hicross;
using kernels::AttnGeometry;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

// softmax(q k^T / sqrt(d)) v with explicit loops
Tensor<double> loop_sdpa(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v, bool causal) {
  const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols(), dv = v.cols();
  Tensor<double> out({lq, dv});
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<double> s(lk, 0.0);
    double mx = -1e300;
    for (std::size_t j = 0; j < lk; ++j) {
      if (causal && j > i) continue;
      for (std::size_t t = 0; t < d; ++t) s[j] += q.at(i, t) * k.at(j, t);
      s[j] /= std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (std::size_t j = 0; j < lk; ++j) {
      s[j] = causal && j > i ? 0.0 : std::exp(s[j] - mx);
      z += s[j];
    }
    for (std::size_t j = 0; j < lk; ++j)
      for (std::size_t t = 0; t < dv; ++t) out.at(i, t) += s[j] / z * v.at(j, t);
  }
  return out;
}

// Gradient check of `f` applied to parameters registered in `store`; the
// scalar loss is a fixed random projection of the op output.
double check_op(ParamStore<double>& store, const std::function<Var(Tape<double>&)>& f, std::uint64_t seed = 9) {
  Tensor<double> w;
  {
    Tape<double> probe;
    const auto& v = probe.value(f(probe));
    w = random_tensor(v.shape(), seed);
  }
  auto loss = [&](Tape<double>& t) { return ops::weighted_sum(t, f(t), w); };
  return grad_check(loss, store).max_rel_error;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrix) {
  auto i2 = Tensor<double>::matrix(2, 2, {1, 0, 0, 1});
  auto m = Tensor<double>::matrix(2, 2, {3, 4, 5, 6});
  EXPECT_EQ(kernels::matmul(i2, m), m);
}

TEST(Matmul, RowTimesColumn) {
  auto c = kernels::matmul(Tensor<double>::matrix(1, 2, {1, 2}), Tensor<double>::matrix(2, 1, {3, 4}));
  ASSERT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c[0], 11.0);
}

TEST(Matmul, AgreesWithTripleLoop) {
  auto a = random_tensor({5, 7}, 1), b = random_tensor({7, 3}, 2);
  EXPECT_LT(max_abs_diff(kernels::matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, Associative) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto a = random_tensor({4, 6}, 3 * s), b = random_tensor({6, 5}, 3 * s + 1), c = random_tensor({5, 3}, 3 * s + 2);
    auto l = kernels::matmul(kernels::matmul(a, b), c), r = kernels::matmul(a, kernels::matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l[i], r[i], 1e-9 * std::max(1.0, std::abs(l[i])));
  }
}

TEST(Matmul, CountsTwoFlopsPerMultiplyAdd) {
  FlopCounter fc;
  kernels::matmul(random_tensor({3, 4}, 1), random_tensor({4, 5}, 2), &fc, "mm");
  EXPECT_EQ(fc.get("mm"), 2u * 3 * 4 * 5);
}

TEST(Matmul, RejectsMismatchedShapes) {
  EXPECT_THROW(kernels::matmul(random_tensor({2, 3}, 1), random_tensor({2, 3}, 2)), DimensionError);
}

TEST(Softmax, Examples) {
  auto y = kernels::softmax(Tensor<double>::matrix(1, 2, {0, 0}));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
  auto a = kernels::softmax(Tensor<double>::matrix(1, 2, {1, 2}));
  auto b = kernels::softmax(Tensor<double>::matrix(1, 2, {1001, 1002}));
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
  auto c = kernels::softmax(Tensor<double>::matrix(1, 3, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(c[i], (i + 1) / 6.0, 1e-15);
}

TEST(Softmax, RowsAreDistributionsAndShiftInvariant) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto x = random_tensor({4, 9}, s, 20.0);
    auto y = kernels::softmax(x);
    auto shifted = x;
    for (auto& v : shifted.data()) v += 37.5;
    EXPECT_LT(max_abs_diff(y, kernels::softmax(shifted)), 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (double v : y.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  auto y = kernels::layernorm(Tensor<double>::matrix(1, 4, {5, 5, 5, 5}), Tensor<double>({4}, 1.0), Tensor<double>({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, PlusMinusOneIsEpsLimited) {
  auto x = Tensor<double>::matrix(1, 2, {1, -1});
  const Tensor<double> g({2}, 1.0), b({2});
  auto tight = kernels::layernorm(x, g, b, 1e-7);
  EXPECT_NEAR(tight[0], 1.0, 1e-6);
  EXPECT_NEAR(tight[1], -1.0, 1e-6);
  auto dflt = kernels::layernorm(x, g, b);
  EXPECT_DOUBLE_EQ(dflt[0], 1.0 / std::sqrt(1.0 + 1e-5));
}

TEST(LayerNorm, ZeroGainGivesBias) {
  auto b = Tensor<double>(Shape{3}, std::vector<double>{0.5, -2, 7});
  auto y = kernels::layernorm(random_tensor({4, 3}, 5), Tensor<double>({3}), b);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y.at(r, j), b[j]);
}

TEST(LayerNorm, SingleFeatureWithoutEpsThrows) {
  EXPECT_THROW(kernels::layernorm(Tensor<double>::matrix(2, 1, {1, 2}), Tensor<double>({1}, 1.0), Tensor<double>({1}), 0.0),
               NumericError);
}

TEST(Sdpa, SingleKeyReturnsItsValue) {
  auto v = Tensor<double>::matrix(1, 3, {0.25, -1, 4});
  auto out = kernels::sdpa(random_tensor({5, 4}, 1), random_tensor({1, 4}, 2), v);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out.at(i, j), v[j]);
}

TEST(Sdpa, IdenticalKeysAverageValues) {
  Tensor<double> k({4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) k.at(i, j) = 0.1 * static_cast<double>(j);
  auto v = random_tensor({4, 2}, 3);
  auto out = kernels::sdpa(random_tensor({2, 3}, 4), k, v);
  for (std::size_t j = 0; j < 2; ++j) {
    const double mean = (v.at(0, j) + v.at(1, j) + v.at(2, j) + v.at(3, j)) / 4.0;
    EXPECT_NEAR(out.at(0, j), mean, 1e-15);
    EXPECT_NEAR(out.at(1, j), mean, 1e-15);
  }
}

TEST(Sdpa, AgreesWithLoopOracle) {
  auto q = random_tensor({3, 4}, 11), k = random_tensor({3, 4}, 12), v = random_tensor({3, 4}, 13);
  EXPECT_LT(max_abs_diff(kernels::sdpa(q, k, v), loop_sdpa(q, k, v, false)), 1e-12);
  EXPECT_LT(max_abs_diff(kernels::sdpa(q, k, v, true), loop_sdpa(q, k, v, true)), 1e-12);
}

TEST(Sdpa, PrefixMaskSeesWholePrefix) {
  const AttnGeometry g{1, 5, 5, 1, 2, 2, true, 3};
  EXPECT_TRUE(g.allowed(0, 2));
  EXPECT_FALSE(g.allowed(0, 3));
  EXPECT_TRUE(g.allowed(3, 3));
  EXPECT_FALSE(g.allowed(3, 4));
  EXPECT_TRUE(g.allowed(4, 0));
}

TEST(GradCheck, SquareAtThree) {
  ParamStore<double> s;
  s.add("x", Tensor<double>({1}, 3.0), ParamGroup::base);
  auto loss = [&](Tape<double>& t) { return ops::sum(t, ops::square(t, t.param(s.get("x")))); };
  const auto r = grad_check(loss, s);
  EXPECT_NEAR(s.get("x").grad[0], 6.0, 1e-12);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, FrozenParameterHasZeroGradient) {
  ParamStore<double> s;
  s.add("a", random_tensor({2, 3}, 1), ParamGroup::base);
  s.add("b", random_tensor({3, 2}, 2), ParamGroup::cross_module);
  s.set_frozen(ParamGroup::base, true);
  auto loss = [&](Tape<double>& t) {
    return ops::sum(t, ops::square(t, ops::matmul(t, t.param(s.get("a")), t.param(s.get("b")))));
  };
  const auto r = grad_check(loss, s);
  for (double g : s.get("a").grad.data()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(r.checked, 6u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(OpGradients, Matmul) {
  ParamStore<double> s;
  auto& a = s.add("a", random_tensor({3, 4}, 1), ParamGroup::base);
  auto& b = s.add("b", random_tensor({4, 2}, 2), ParamGroup::base);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::matmul(t, t.param(a), t.param(b)); }), 1e-6);
}

TEST(OpGradients, AddBiasScale) {
  ParamStore<double> s;
  auto& x = s.add("x", random_tensor({3, 4}, 1), ParamGroup::base);
  auto& y = s.add("y", random_tensor({3, 4}, 2), ParamGroup::base);
  auto& b = s.add("b", random_tensor({4}, 3), ParamGroup::base);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) {
              return ops::scale(t, ops::add_bias(t, ops::add(t, t.param(x), t.param(y)), t.param(b)), 0.7);
            }),
            1e-6);
}

TEST(OpGradients, Gelu) {
  ParamStore<double> s;
  auto& x = s.add("x", random_tensor({4, 5}, 1, 3.0), ParamGroup::base);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::gelu(t, t.param(x)); }), 1e-6);
}

TEST(OpGradients, LayerNorm) {
  ParamStore<double> s;
  auto& x = s.add("x", random_tensor({3, 6}, 1, 2.0), ParamGroup::base);
  auto& g = s.add("g", random_tensor({6}, 2), ParamGroup::base);
  auto& b = s.add("b", random_tensor({6}, 3), ParamGroup::base);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::layernorm(t, t.param(x), t.param(g), t.param(b)); }), 1e-6);
}

TEST(OpGradients, Softmax) {
  ParamStore<double> s;
  auto& x = s.add("x", random_tensor({3, 5}, 1, 2.0), ParamGroup::base);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::softmax(t, t.param(x)); }), 1e-6);
}

TEST(OpGradients, AttentionAllMaskModes) {
  for (auto [causal, prefix] : std::vector<std::pair<bool, std::size_t>>{{false, 0}, {true, 0}, {true, 2}}) {
    ParamStore<double> s;
    auto& q = s.add("q", random_tensor({2 * 4, 6}, 1), ParamGroup::base);
    auto& k = s.add("k", random_tensor({2 * 4, 6}, 2), ParamGroup::base);
    auto& v = s.add("v", random_tensor({2 * 4, 4}, 3), ParamGroup::base);
    const AttnGeometry g{2, 4, 4, 2, 3, 2, causal, prefix};
    EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::attention(t, t.param(q), t.param(k), t.param(v), g); }), 1e-6)
        << "causal=" << causal << " prefix=" << prefix;
  }
}

TEST(OpGradients, CrossShapedAttention) {
  ParamStore<double> s;
  auto& q = s.add("q", random_tensor({2 * 3, 4}, 1), ParamGroup::base);
  auto& k = s.add("k", random_tensor({2 * 5, 4}, 2), ParamGroup::base);
  auto& v = s.add("v", random_tensor({2 * 5, 4}, 3), ParamGroup::base);
  const AttnGeometry g{2, 3, 5, 2, 2, 2, false, 0};
  EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::attention(t, t.param(q), t.param(k), t.param(v), g); }), 1e-6);
}

TEST(OpGradients, EmbeddingAndPositional) {
  ParamStore<double> s;
  auto& tab = s.add("tab", random_tensor({6, 3}, 1), ParamGroup::base);
  auto& pos = s.add("pos", random_tensor({4, 3}, 2), ParamGroup::base);
  const std::vector<int> ids{1, 5, 1, 0, 2, 2};
  EXPECT_LT(check_op(s, [&](Tape<double>& t) {
              return ops::add_positional(t, ops::embedding(t, t.param(tab), ids), t.param(pos), 3);
            }),
            1e-6);
}

TEST(OpGradients, SequenceShuffles) {
  ParamStore<double> s;
  auto& a = s.add("a", random_tensor({2 * 2, 4}, 1), ParamGroup::base);
  auto& b = s.add("b", random_tensor({2 * 3, 4}, 2), ParamGroup::base);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) {
              Var c = ops::concat_seq(t, t.param(a), t.param(b), 2, 2, 3);
              return ops::slice_cols(t, ops::slice_seq(t, c, 2, 5, 1, 3), 1, 2);
            }),
            1e-6);
}

TEST(OpGradients, RowRouting) {
  ParamStore<double> s;
  auto& a = s.add("a", random_tensor({5, 3}, 1), ParamGroup::base);
  auto& b = s.add("b", random_tensor({5, 3}, 2), ParamGroup::base);
  const std::vector<std::uint8_t> mask{1, 0, 0, 1, 0};
  EXPECT_LT(check_op(s, [&](Tape<double>& t) { return ops::select_rows(t, mask, t.param(a), t.param(b)); }), 1e-6);
  EXPECT_LT(check_op(s, [&](Tape<double>& t) {
              Var img = ops::gather_rows(t, t.param(a), {0, 3});
              Var txt = ops::gather_rows(t, t.param(b), {1, 2, 4});
              return ops::merge_rows(t, mask, img, txt);
            }),
            1e-6);
}

TEST(OpGradients, CrossEntropy) {
  ParamStore<double> s;
  auto& x = s.add("x", random_tensor({4, 5}, 1, 2.0), ParamGroup::base);
  const std::vector<int> tgt{0, 3, 4, 1};
  const std::vector<double> w{1, 0, 1, 0.5};
  auto loss = [&](Tape<double>& t) { return ops::cross_entropy(t, t.param(x), tgt, w); };
  EXPECT_LT(grad_check(loss, s).max_rel_error, 1e-6);
}

TEST(Rows, GatherMergeInterleave) {
  Tape<double> t;
  Var x = t.constant(Tensor<double>::matrix(4, 1, {10, 20, 30, 40}));
  Var img = ops::gather_rows(t, x, {0, 2});
  Var txt = ops::gather_rows(t, x, {1, 3});
  const auto& m = t.value(ops::merge_rows(t, {1, 0, 1, 0}, img, txt));
  EXPECT_EQ(m, Tensor<double>::matrix(4, 1, {10, 20, 30, 40}));
  EXPECT_THROW(ops::gather_rows(t, x, {}), std::exception);
  EXPECT_THROW(ops::gather_rows(t, x, {4}), std::exception);
}

TEST(Tape, RejectsNonFiniteValues) {
  Tape<double> t;
  EXPECT_THROW(t.constant(Tensor<double>::matrix(1, 1, {std::nan("")})), NumericError);
}

TEST(Init, PerNameStreamsAreStable) {
  auto a = init::xavier_uniform<double>(4, 3, 7, "w");
  auto b = init::xavier_uniform<double>(4, 3, 7, "w");
  auto c = init::xavier_uniform<double>(4, 3, 7, "v");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}
