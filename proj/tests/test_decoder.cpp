#include <set>

#include <gtest/gtest.h>

#include "hicross/decoder/model.hpp"
#include "hicross/numerics/grad_check.hpp"
#include "hicross/numerics/rng.hpp"

using namespace hicross;
using decoder::Model;
using decoder::ModelConfig;
using encoder::ImageGrid;

namespace {

ModelConfig tiny(bool cross = true) {
  ModelConfig c;
  c.low = {28, 14, 1, 1, 6, 2, 2};
  c.high = {56, 14, 1, 1, 6, 2, 2};
  c.decoder.layers = 1;
  c.decoder.hidden = 8;
  c.decoder.heads = 2;
  c.decoder.cross_hidden = 4;
  c.decoder.cross_heads = 2;
  c.decoder.high_dim = 6;
  c.decoder.vocab = 11;
  c.decoder.max_text = 8;
  c.decoder.ffn_mult = 2;
  c.use_cross = cross;
  c.seed = 5;
  return c;
}

std::vector<ImageGrid> images(std::size_t n, std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageGrid> out;
  for (std::size_t i = 0; i < n; ++i) {
    ImageGrid g(side, side, 1, 0.0);
    for (auto& v : g.pixels) v = rng.uniform();
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<int> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> ids(n);
  for (auto& v : ids) v = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(vocab) - 1));
  return ids;
}

template <class T>
decoder::ModelInputs<T> inputs(const ModelConfig& c, const std::vector<ImageGrid>& imgs, std::vector<int> ids,
                               std::size_t len) {
  std::vector<const ImageGrid*> p;
  for (const auto& g : imgs) p.push_back(&g);
  return decoder::make_inputs<T>(c, p, std::move(ids), len);
}

template <class T>
Tensor<T> logits(const Model<T>& m, const decoder::ModelInputs<T>& in) {
  Tape<T> t;
  t.set_grad_enabled(false);
  return t.value(m.forward(t, in));
}

template <class T>
void randomize(Parameter<T>& p, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto& v : p.value.data()) v = static_cast<T>(scale * rng.uniform(-1, 1));
}

Tensor<double> random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST(Msa, ZeroOutputProjectionIsIdentity) {
  Model<double> m(tiny());
  m.params().get("dec.layer0.attn.out").value.fill(0.0);
  Tape<double> t;
  Var x = t.constant(random_tensor({2 * 7, 8}, 1));
  const std::vector<std::uint8_t> mask{1, 1, 1, 0, 0, 0, 0};
  EXPECT_EQ(t.value(m.msa_layer(t, 0, x, 2, mask)), t.value(x));
}

TEST(Msa, PreservesShape) {
  Model<double> m(tiny());
  Tape<double> t;
  Var x = t.constant(random_tensor({2 * 7, 8}, 2));
  EXPECT_EQ(t.value(m.msa_layer(t, 0, x, 2, {1, 1, 0, 0, 0, 0, 0})).shape(), (Shape{14, 8}));
}

TEST(Msa, RoutingUsesOnlyTheSelectedWeights) {
  Model<double> m(tiny());
  const auto x = random_tensor({2 * 5, 8}, 3);
  auto run = [&](const std::vector<std::uint8_t>& mask) {
    Tape<double> t;
    return t.value(m.msa_layer(t, 0, t.constant(x), 2, mask));
  };
  const std::vector<std::uint8_t> all_image(5, 1), all_text(5, 0);
  const auto img0 = run(all_image), txt0 = run(all_text);
  randomize(m.params().get("dec.layer0.attn.qkv"), 4);
  EXPECT_EQ(run(all_image), img0);
  EXPECT_NE(run(all_text), txt0);
  const auto txt1 = run(all_text);
  randomize(m.params().get("dec.layer0.attn.qkv_expert"), 5);
  EXPECT_EQ(run(all_text), txt1);
}

TEST(Msa, ImagePositionsMustBePrefix) {
  Model<double> m(tiny());
  Tape<double> t;
  Var x = t.constant(random_tensor({3, 8}, 2));
  EXPECT_THROW(m.msa_layer(t, 0, x, 1, {0, 1, 0}), DimensionError);
}

TEST(Ffn, EqualExpertAndBaseMakeRoutingIrrelevant) {
  Model<double> m(tiny());
  for (const std::string w : {"w1", "b1", "w2", "b2"}) {
    randomize(m.params().get("dec.layer0.ffn." + w), 6);
    m.params().get("dec.layer0.ffn_expert." + w).value = m.params().get("dec.layer0.ffn." + w).value;
  }
  const auto x = random_tensor({6, 8}, 7);
  auto run = [&](const std::vector<std::uint8_t>& rows) {
    Tape<double> t;
    return t.value(m.ffn_layer(t, 0, t.constant(x), rows));
  };
  const auto a = run({1, 1, 1, 1, 1, 1});
  EXPECT_EQ(a, run({0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(a, run({1, 1, 0, 0, 1, 0}));
}

TEST(Mca, ZeroOutputOrValueProjectionIsIdentity) {
  for (const std::string zeroed : {"cross.wo", "cross.wv"}) {
    Model<double> m(tiny());
    randomize(m.params().get("dec.layer0.cross.wo"), 8);
    m.params().get("dec.layer0." + zeroed).value.fill(0.0);
    Tape<double> t;
    Var x = t.constant(random_tensor({2 * 7, 8}, 9));
    Var hi = t.constant(random_tensor({2 * 16, 6}, 10));
    EXPECT_EQ(t.value(m.mca_layer(t, 0, x, hi, 2, 7, 16)), t.value(x)) << zeroed;
  }
}

TEST(Mca, OutputShape) {
  Model<double> m(tiny());
  Tape<double> t;
  Var x = t.constant(random_tensor({2 * 7, 8}, 1));
  Var hi = t.constant(random_tensor({2 * 16, 6}, 2));
  EXPECT_EQ(t.value(m.mca_layer(t, 0, x, hi, 2, 7, 16)).shape(), (Shape{14, 8}));
}

TEST(Mca, SingleKeyClosedForm) {
  Model<double> m(tiny());
  randomize(m.params().get("dec.layer0.cross.wo"), 3);
  const auto x = random_tensor({2 * 3, 8}, 4), hi = random_tensor({2, 6}, 5);
  Tape<double> t;
  const auto out = t.value(m.mca_layer(t, 0, t.constant(x), t.constant(hi), 2, 3, 1));
  const auto& wv = m.params().get("dec.layer0.cross.wv").value;
  const auto& wo = m.params().get("dec.layer0.cross.wo").value;
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> v(4, 0.0), delta(8, 0.0);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 6; ++k) v[c] += hi.at(b, k) * wv.at(k, c);
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t c = 0; c < 4; ++c) delta[j] += v[c] * wo.at(c, j);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out.at(b * 3 + i, j), x.at(b * 3 + i, j) + delta[j], 1e-12);
  }
}

TEST(Mca, RejectsWrongHighWidth) {
  Model<double> m(tiny());
  Tape<double> t;
  EXPECT_THROW(m.mca_layer(t, 0, t.constant(random_tensor({7, 8}, 1)), t.constant(random_tensor({16, 5}, 2)), 1, 7, 16),
               DimensionError);
}

TEST(Mca, PerturbingHighTokensReachesEveryPosition) {
  Model<double> m(tiny());
  randomize(m.params().get("dec.layer0.cross.wo"), 3);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = random_tensor({7, 8}, 100 + s);
    auto hi = random_tensor({16, 6}, 200 + s);
    auto run = [&] {
      Tape<double> t;
      return t.value(m.mca_layer(t, 0, t.constant(x), t.constant(hi), 1, 7, 16));
    };
    const auto a = run();
    hi.at(s % 16, s % 6) += 0.5;
    const auto b = run();
    for (std::size_t i = 0; i < 7; ++i) {
      double d = 0;
      for (std::size_t j = 0; j < 8; ++j) d += std::abs(a.at(i, j) - b.at(i, j));
      EXPECT_GT(d, 0.0) << "position " << i;
    }
  }
}

TEST(Attention, ProbabilitiesAreRowStochastic) {
  for (bool causal : {false, true}) {
    const kernels::AttnGeometry g{2, 5, 5, 2, 3, 3, causal, 2};
    const auto q = random_tensor({10, 6}, 1), k = random_tensor({10, 6}, 2), v = random_tensor({10, 6}, 3);
    Tensor<double> out({10, 6});
    std::vector<double> probs(2 * 2 * 5 * 5);
    kernels::attention_forward(q.ptr(), k.ptr(), v.ptr(), out.ptr(), probs.data(), g);
    for (std::size_t r = 0; r < 20; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += probs[r * 5 + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Decoder, FreshCrossModuleIsExactIdentity) {
  Model<float> with(tiny(true)), without(tiny(false));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto imgs = images(2, 56, s);
    const auto ids = random_ids(2 * 6, 11, s);
    const auto a = logits(with, inputs<float>(with.config(), imgs, ids, 6));
    const auto b = logits(without, inputs<float>(without.config(), imgs, ids, 6));
    EXPECT_LE(max_abs_diff(a, b), 1e-6f);
  }
}

TEST(Decoder, LogitShapeAndDeterminism) {
  const auto imgs = images(3, 56, 1);
  const auto ids = random_ids(3 * 5, 11, 2);
  Model<float> a(tiny()), b(tiny());
  const auto la = logits(a, inputs<float>(a.config(), imgs, ids, 5));
  EXPECT_EQ(la.shape(), (Shape{15, 11}));
  EXPECT_EQ(la, logits(b, inputs<float>(b.config(), imgs, ids, 5)));
}

TEST(Decoder, CausalOverText) {
  Model<double> m(tiny());
  randomize(m.params().get("dec.layer0.cross.wo"), 1);
  const auto imgs = images(1, 56, 3);
  auto ids = random_ids(6, 11, 4);
  const auto base = logits(m, inputs<double>(m.config(), imgs, ids, 6));
  for (std::size_t t = 0; t < 6; ++t) {
    auto p = ids;
    p[t] = (p[t] + 1) % 11;
    const auto l = logits(m, inputs<double>(m.config(), imgs, p, 6));
    for (std::size_t i = 0; i < 6; ++i) {
      double d = 0;
      for (std::size_t j = 0; j < 11; ++j) d += std::abs(l.at(i, j) - base.at(i, j));
      if (i < t)
        EXPECT_EQ(d, 0.0) << "token " << t << " leaked into position " << i;
      else
        EXPECT_GT(d, 0.0);
    }
  }
}

TEST(Decoder, RejectsBadTokens) {
  Model<float> m(tiny());
  const auto imgs = images(1, 56, 1);
  EXPECT_THROW(logits(m, inputs<float>(m.config(), imgs, {1, 2, 11}, 3)), DimensionError);
  EXPECT_THROW(logits(m, inputs<float>(m.config(), imgs, std::vector<int>(9, 1), 9)), DimensionError);
}

TEST(Decoder, CrossWeightGradients) {
  Model<double> m(tiny());
  randomize(m.params().get("dec.layer0.cross.wo"), 7);
  const auto imgs = images(2, 56, 8);
  const auto in = inputs<double>(m.config(), imgs, random_ids(8, 11, 9), 4);
  const std::vector<int> tgt = random_ids(8, 11, 10);
  const std::vector<double> w(8, 1.0);
  auto loss = [&](Tape<double>& t) { return ops::cross_entropy(t, m.forward(t, in), tgt, w); };
  const std::set<std::string> names{"dec.layer0.cross.wq", "dec.layer0.cross.wk", "dec.layer0.cross.wv",
                                    "dec.layer0.cross.wo"};
  const auto r = grad_check(loss, m.params(), 1e-5, [&](const Parameter<double>& p) { return names.count(p.name) > 0; });
  EXPECT_EQ(r.checked, 8u * 4 + 6u * 4 * 2 + 4u * 8);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Decoder, GradientsThroughBothEncoders) {
  Model<double> m(tiny());
  randomize(m.params().get("dec.layer0.cross.wo"), 7);
  const auto imgs = images(1, 56, 8);
  const auto in = inputs<double>(m.config(), imgs, random_ids(3, 11, 9), 3);
  const std::vector<int> tgt{1, 2, 3};
  const std::vector<double> w(3, 1.0);
  auto loss = [&](Tape<double>& t) { return ops::cross_entropy(t, m.forward(t, in), tgt, w); };
  const auto r = grad_check(loss, m.params(), 1e-5, [](const Parameter<double>& p) {
    return p.name.rfind("enc_lo.patch", 0) == 0 || p.name.rfind("enc_hi.block0.qkv", 0) == 0;
  });
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(ParamGroups, ExhaustiveDisjointPartition) {
  Model<float> m(tiny());
  const auto g = m.param_groups();
  std::set<std::string> seen;
  for (const auto* list : {&g.base, &g.visual_expert, &g.cross_module})
    for (const auto& n : *list) EXPECT_TRUE(seen.insert(n).second) << n;
  EXPECT_EQ(seen.size(), m.params().size());
  EXPECT_EQ(g.total(), m.params().count());
  for (const auto& n : g.cross_module)
    EXPECT_TRUE(n.rfind("enc_hi.", 0) == 0 || n.find(".cross.") != std::string::npos) << n;
  for (const auto& n : g.visual_expert) EXPECT_NE(n.find("_expert"), std::string::npos) << n;
  Model<float> plain(tiny(false));
  EXPECT_EQ(plain.param_groups().cross_module_count, 0u);
  EXPECT_EQ(plain.param_groups().base_count, g.base_count);
}

TEST(Config, KeyValueRoundTrip) {
  auto c = tiny();
  c.seed = 99;
  const auto back = ModelConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.to_kv(), c.to_kv());
  auto bad = tiny();
  bad.decoder.high_dim = 7;
  EXPECT_THROW(bad.validate(), DimensionError);
}
