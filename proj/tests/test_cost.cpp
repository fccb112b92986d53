#include <cmath>
#include <regex>

#include <gtest/gtest.h>

#include "hicross/cost/attention_cost.hpp"
#include "hicross/cost/cost_model.hpp"
#include "hicross/cost/measure.hpp"
#include "hicross/decoder/model.hpp"
#include "hicross/numerics/rng.hpp"

using namespace hicross;
using namespace hicross::cost;

namespace {

AttnCostInputs full_scale_geometry(double text) {
  AttnCostInputs c;
  c.text_tokens = text;
  return c;
}

decoder::ModelConfig toy(bool cross = true) {
  decoder::ModelConfig c;
  c.decoder.vocab = 40;
  c.decoder.max_text = 16;
  c.use_cross = cross;
  return c;
}

double measured(const std::vector<MeasureRow>& rows, const std::string& item) {
  for (const auto& r : rows)
    if (r.item == item) return r.measured;
  ADD_FAILURE() << "no row " << item;
  return 0;
}

}  // namespace

TEST(AttentionCost, ImprovedFullScaleExample) {
  const double expect = 768.0 * 6400 * 1024 + 768.0 * 768 * 4096;
  EXPECT_EQ(attn_flops_improved(full_scale_geometry(512)), expect);
  EXPECT_EQ(expect, 7449083904.0);
}

TEST(AttentionCost, ImprovedDegenerateAndLinearInHigh) {
  auto c = full_scale_geometry(128);
  c.high_tokens = 0;
  const double self = 384.0 * 384 * 4096;
  EXPECT_EQ(attn_flops_improved(c), self);
  c.high_tokens = 3000;
  const double cross1 = attn_flops_improved(c) - self;
  c.high_tokens = 6000;
  EXPECT_EQ(attn_flops_improved(c) - self, 2 * cross1);
}

TEST(AttentionCost, OriginalExamples) {
  EXPECT_EQ(attn_flops_original(full_scale_geometry(512)), 6912.0 * 6912 * 4096);
  EXPECT_NEAR(attn_flops_original(full_scale_geometry(512)), 1.957e11, 0.001e11);
  auto c = full_scale_geometry(0);
  c.high_tokens = c.low_tokens;
  EXPECT_EQ(attn_flops_original(c), c.low_tokens * c.low_tokens * c.dec_width());
  auto d = full_scale_geometry(100);
  d.high_tokens = 300;
  const double before = attn_flops_original(d);
  d.high_tokens = 700;
  EXPECT_EQ(attn_flops_original(d), 4 * before);
}

TEST(ReductionFactor, FullScaleValues) {
  const auto r512 = reduction_factor(full_scale_geometry(512));
  EXPECT_DOUBLE_EQ(r512.lower_bound, 9.0);
  EXPECT_NEAR(r512.reduction_factor, 9.0 * (4.0 * 6912) / (6400 + 4.0 * 768), 1e-12);
  EXPECT_NEAR(r512.reduction_factor, 26.27, 0.01);
  EXPECT_GT(r512.reduction_factor, 25.0);
  const auto r0 = reduction_factor(full_scale_geometry(0));
  EXPECT_DOUBLE_EQ(r0.lower_bound, 25.0);
  EXPECT_NEAR(r0.reduction_factor, 25.0 * 25600 / 7424, 1e-12);
  EXPECT_NEAR(r0.reduction_factor, 86.21, 0.01);
  EXPECT_DOUBLE_EQ(r0.case1_approx, 25.0);
}

TEST(ReductionFactor, FactoredFormMatchesDivision) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    AttnCostInputs c;
    c.low_tokens = static_cast<double>(rng.uniform_int(1, 1024));
    c.high_tokens = static_cast<double>(rng.uniform_int(1, 8192));
    c.text_tokens = static_cast<double>(rng.uniform_int(0, 2048));
    c.cross_heads = static_cast<double>(rng.uniform_int(1, 32));
    c.dec_heads = static_cast<double>(rng.uniform_int(1, 32));
    const auto r = reduction_factor(c);
    EXPECT_NEAR(r.reduction_factor, r.direct_ratio, 1e-12 * r.direct_ratio);
  }
  AttnCostInputs eq;
  eq.high_tokens = eq.low_tokens;
  eq.cross_head_dim = eq.dec_head_dim;
  const auto r = reduction_factor(eq);
  const double hi = eq.high_tokens, lo = eq.low_tokens;
  EXPECT_NEAR(r.reduction_factor, r.lower_bound * hi / (hi + lo), 1e-12);
  EXPECT_NEAR(r.reduction_factor, r.direct_ratio, 1e-12);
}

TEST(ReductionFactor, BoundHoldsExactlyWhenConditionHolds) {
  Rng rng(11);
  int holds = 0;
  for (int i = 0; i < 5000; ++i) {
    AttnCostInputs c;
    c.low_tokens = static_cast<double>(rng.uniform_int(1, 1024));
    c.high_tokens = static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(c.low_tokens), 8192));
    c.text_tokens = static_cast<double>(rng.uniform_int(0, 2048));
    c.cross_heads = static_cast<double>(rng.uniform_int(1, 32));
    c.cross_head_dim = static_cast<double>(rng.uniform_int(1, 64));
    c.dec_heads = static_cast<double>(rng.uniform_int(1, 32));
    c.dec_head_dim = static_cast<double>(rng.uniform_int(1, 128));
    const auto r = reduction_factor(c);
    const double slack = 1e-12 * r.lower_bound;
    if (lower_bound_condition(c)) {
      ++holds;
      EXPECT_GE(r.reduction_factor, r.lower_bound - slack);
    } else {
      EXPECT_LT(r.reduction_factor, r.lower_bound + slack);
    }
  }
  EXPECT_GT(holds, 100);
}

TEST(ReductionFactor, WidthConditionAloneIsNotSufficient) {
  AttnCostInputs c;
  c.low_tokens = 256;
  c.high_tokens = 300;
  c.text_tokens = 64;
  c.cross_head_dim = c.dec_head_dim;
  ASSERT_GE(c.dec_width(), c.cross_width());
  const auto r = reduction_factor(c);
  EXPECT_FALSE(lower_bound_condition(c));
  EXPECT_FALSE(r.bound_holds);
  EXPECT_LT(r.reduction_factor, r.lower_bound);
}

TEST(ReductionFactor, CaseOneApproximationConverges) {
  double prev = 1e300;
  for (double hi = 1e3; hi <= 1e9; hi *= 10) {
    AttnCostInputs c;
    c.high_tokens = hi;
    c.text_tokens = 64;
    const auto r = reduction_factor(c);
    const double err = std::abs(r.case1_approx - r.lower_bound) / r.lower_bound;
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(AttentionCoreFlops, MatchesKernelConvention) {
  const auto f = attention_core_flops(4, 64, 16, 4, 12, 4, 8, 2, 3, true);
  const kernels::AttnGeometry self{3, 20, 20, 4, 12, 12, false, 0}, cross{3, 20, 64, 4, 8, 8, false, 0};
  EXPECT_EQ(f.self, 2 * self.flops());
  EXPECT_EQ(f.cross, 2 * cross.flops());
  EXPECT_EQ(attention_core_flops(4, 64, 16, 4, 12, 4, 8, 2, 3, false).cross, 0u);
}

TEST(ModelFlops, FullScaleOrderingAndHalfClaim) {
  const auto s = ModelSpec::full_scale();
  const double b224 = model_flops(s, 224, false, 128).tflops(), b490 = model_flops(s, 490, false, 128).tflops();
  const double c756 = model_flops(s, 756, true, 128).tflops(), c1120 = model_flops(s, 1120, true, 128).tflops();
  EXPECT_LT(b224, c756);
  EXPECT_LT(c756, c1120);
  EXPECT_LT(c1120, b490);
  EXPECT_LT(c1120, 0.5 * b490);
  for (auto [est, ref] : std::vector<std::pair<double, double>>{{b224, 7.77}, {b490, 29.14}, {c756, 10.08}, {c1120, 12.56}})
    EXPECT_NEAR(est / ref, 1.0, 0.25) << est << " vs " << ref;
}

TEST(ModelFlops, NoHighTokensEqualsBase) {
  const auto s = ModelSpec::full_scale();
  for (std::uint64_t lt : {0u, 128u, 512u}) {
    const auto a = model_flops(s, 0, true, lt), b = model_flops(s, 224, false, lt);
    EXPECT_EQ(a.total, b.total);
  }
}

TEST(ModelFlops, AffineInPatchCountAndReproducible) {
  const auto s = ModelSpec::full_scale();
  std::vector<double> x, y;
  for (std::uint64_t r = 140; r <= 1400; r += 140) {
    x.push_back(static_cast<double>(s.high.tokens_at(r)));
    y.push_back(model_flops(s, r, true, 256).total);
  }
  const auto fit = fit_polynomial(x, y, 1);
  EXPECT_GT(fit.coeffs[1], 0.0);
  EXPECT_GT(fit.r2, 1.0 - 1e-12);
  EXPECT_EQ(model_flops(s, 1120, true, 256).total, model_flops(s, 1120, true, 256).total);
}

TEST(ModelFlops, SheetSumsToTotalAndRejectsBadResolution) {
  const auto r = model_flops(ModelSpec::full_scale(), 1120, true, 128);
  double sum = 0;
  for (const auto& l : r.sheet) sum += l.flops;
  EXPECT_EQ(sum, r.total);
  EXPECT_GT(r.sum("cross."), 0.0);
  EXPECT_NE(r.format().find("TFLOPs"), std::string::npos);
  EXPECT_THROW(model_flops(ModelSpec::full_scale(), 1000, true, 0), std::invalid_argument);
}

TEST(ParamCount, FullScaleAnchors) {
  const auto r = param_count(ModelSpec::full_scale());
  EXPECT_NEAR(static_cast<double>(r.high_encoder), 3.0e8, 0.1 * 3.0e8);
  const double layers = 32.0 * (4096.0 * 1024 + 2.0 * 1024 * 1024 + 1024.0 * 4096);
  EXPECT_NEAR(static_cast<double>(r.cross_layers), layers, 32.0 * 4096);
  EXPECT_GE(static_cast<double>(r.phase1_trainable()), 450e6);
  EXPECT_LE(static_cast<double>(r.phase1_trainable()), 840e6);
  EXPECT_NEAR(r.phase1_fraction(), 0.035, 0.01);
  EXPECT_NEAR(static_cast<double>(r.total()), 18.4e9, 0.1 * 18.4e9);
  EXPECT_EQ(r.phase2_trainable(), r.cross_module + r.visual_expert);
}

TEST(ParamCount, ZeroLayerSpecCountsOnlyEmbeddingsAndProjections) {
  ModelSpec s;
  s.low = {28, 14, 1, 0, 8, 1, 0};
  s.high = {56, 14, 1, 0, 6, 1, 0};
  s.dec = {0, 16, 2, 32, 10, 0, Norm::rms, Ffn::gelu, false};
  s.cross = {4, 2, 6};
  s.adapter = {false, 0};
  const auto r = param_count(s);
  EXPECT_EQ(r.low_encoder, 196u * 8 + 8 + 4 * 8);
  EXPECT_EQ(r.high_encoder, 196u * 6 + 6 + 16 * 6);
  EXPECT_EQ(r.cross_layers, 0u);
  EXPECT_EQ(r.visual_expert, 0u);
  EXPECT_EQ(r.base, r.low_encoder + 8 * 16 + 10 * 16 + 16 + 16 * 10);
}

TEST(ParamCount, MatchesConstructedStores) {
  for (bool cross : {true, false})
    for (std::size_t layers : {1u, 2u, 3u}) {
      auto c = toy(cross);
      c.decoder.layers = layers;
      c.low.layers = layers - 1;
      c.high.layers = layers;
      decoder::Model<float> m(c);
      const auto g = m.param_groups();
      const auto r = param_count(ModelSpec::from_config(c), cross);
      EXPECT_EQ(r.base, g.base_count);
      EXPECT_EQ(r.visual_expert, g.visual_expert_count);
      EXPECT_EQ(r.cross_module, g.cross_module_count);
      EXPECT_EQ(r.total(), m.params().count());
    }
}

TEST(Sweep, CurvesAndFits) {
  const auto rows = sweep(ModelSpec::full_scale(), {224, 490, 756, 1120}, 512);
  ASSERT_EQ(rows.size(), 4u);
  std::vector<double> x, yb, yc;
  for (const auto& r : rows) {
    x.push_back(static_cast<double>(r.patches));
    yb.push_back(r.flops_base);
    yc.push_back(r.flops_cross);
  }
  EXPECT_GE(fit_polynomial(x, yc, 1).r2, 0.99);
  EXPECT_GE(fit_polynomial(x, yb, 2).r2, 0.99);
  EXPECT_EQ(sweep(ModelSpec::full_scale(), {224}, 0).size(), 1u);
  EXPECT_THROW(sweep(ModelSpec::full_scale(), {}, 0), std::invalid_argument);
}

TEST(Sweep, CsvAndSvg) {
  const auto rows = sweep(ModelSpec::full_scale(), {224, 490, 756, 1120}, 512);
  const auto csv = sweep_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "resolution,patches,L_T,flops_base,flops_cross,reduction_exact,reduction_lower_bound");
  const auto svg = sweep_svg(rows);
  const std::regex poly("<polyline");
  EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), poly), std::sregex_iterator()), 2);
}

TEST(Fit, RecoversExactPolynomial) {
  std::vector<double> x{0, 1, 2, 3, 4}, y;
  for (double v : x) y.push_back(3 - 2 * v + 0.5 * v * v);
  const auto f = fit_polynomial(x, y, 2);
  EXPECT_NEAR(f.coeffs[0], 3, 1e-10);
  EXPECT_NEAR(f.coeffs[1], -2, 1e-10);
  EXPECT_NEAR(f.coeffs[2], 0.5, 1e-10);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(Measure, ToyRatiosWithinFivePercent) {
  const auto rows = measure_vs_model(toy(), 2, 16, 1);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_GE(r.ratio(), 0.95) << r.item;
    EXPECT_LE(r.ratio(), 1.05) << r.item;
  }
  EXPECT_GT(measured(rows, "attn.cross"), 0.0);
}

TEST(Measure, DoublingBatchDoublesCounts) {
  const auto one = measure_vs_model(toy(), 1, 16, 2), two = measure_vs_model(toy(), 2, 16, 2);
  for (const std::string item : {"attn.self", "attn.cross", "forward"})
    EXPECT_EQ(measured(two, item), 2 * measured(one, item)) << item;
}

TEST(Measure, BaseModelHasNoCrossFlops) {
  const auto rows = measure_vs_model(toy(false), 2, 8, 3);
  EXPECT_EQ(measured(rows, "attn.cross"), 0.0);
  for (const auto& r : rows) EXPECT_DOUBLE_EQ(r.ratio(), 1.0) << r.item;
}
