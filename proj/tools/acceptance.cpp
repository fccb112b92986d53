#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <regex>
#include <sstream>

#include "hicross/agent/scoring.hpp"
#include "hicross/cost/attention_cost.hpp"
#include "hicross/cost/cost_model.hpp"
#include "hicross/decoder/model.hpp"
#include "hicross/gui/boxes.hpp"
#include "hicross/gui/dataset.hpp"
#include "hicross/gui/page.hpp"
#include "hicross/harness/checkpoint.hpp"
#include "hicross/harness/eval.hpp"
#include "hicross/harness/train.hpp"
#include "hicross/numerics/grad_check.hpp"
#include "hicross/numerics/rng.hpp"

using namespace hicross;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void detail(const std::string& s) { std::cout << "    " << s << std::endl; }

void verdict(int n, bool ok, const std::string& what, double secs) {
  std::ostringstream t;
  t << std::fixed << std::setprecision(2) << secs;
  std::cout << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << "  " << what << " [" << t.str() << " s]"
            << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

cost::AttnCostInputs full_scale_geometry(double lt) {
  cost::AttnCostInputs c;
  c.low_tokens = 256;
  c.high_tokens = 6400;
  c.text_tokens = lt;
  c.cross_heads = 32;
  c.cross_head_dim = 32;
  c.dec_heads = 32;
  c.dec_head_dim = 128;
  return c;
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = Clock::now();
  bool fixed_ok = true;
  for (double lt : {0.0, 64.0, 256.0, 512.0, 2048.0}) {
    const auto r = cost::reduction_factor(full_scale_geometry(lt));
    const bool ok = r.reduction_factor >= (6400 + lt) / (256 + lt);
    fixed_ok = fixed_ok && ok;
    detail("L_T=" + fmt(lt) + ": exact " + fmt(r.reduction_factor) + " >= bound " + fmt(r.lower_bound) +
           (ok ? "" : "  VIOLATED"));
  }

  // Random configurations with H_dec d_dec >= H_cross d_cross and L_lo < L_hi.
  Rng rng(20240101, "criterion1");
  std::size_t violations = 0, cond_true = 0, cond_true_hold = 0;
  std::string first;
  for (int i = 0; i < 1000; ++i) {
    cost::AttnCostInputs c;
    c.low_tokens = static_cast<double>(rng.uniform_int(1, 4096));
    c.high_tokens = c.low_tokens + static_cast<double>(rng.uniform_int(1, 16384));
    c.text_tokens = static_cast<double>(rng.uniform_int(0, 4096));
    do {
      c.cross_heads = static_cast<double>(rng.uniform_int(1, 64));
      c.cross_head_dim = static_cast<double>(rng.uniform_int(8, 256));
      c.dec_heads = static_cast<double>(rng.uniform_int(1, 64));
      c.dec_head_dim = static_cast<double>(rng.uniform_int(8, 256));
    } while (c.dec_width() < c.cross_width());
    const auto r = cost::reduction_factor(c);
    const bool holds = r.reduction_factor >= r.lower_bound;
    if (!holds && violations++ == 0)
      first = "L_lo=" + fmt(c.low_tokens) + " L_hi=" + fmt(c.high_tokens) + " L_T=" + fmt(c.text_tokens) +
              " r=" + fmt(c.dec_width() / c.cross_width()) + ": exact " + fmt(r.reduction_factor) + " < bound " +
              fmt(r.lower_bound);
    if (cost::lower_bound_condition(c)) {
      ++cond_true;
      cond_true_hold += holds;
    }
  }
  detail("random configs: " + std::to_string(violations) + "/1000 violate the bound");
  if (violations) detail("first violation: " + first);
  detail("configs meeting L_hi(r-1) >= L_lo r: " + std::to_string(cond_true_hold) + "/" + std::to_string(cond_true) +
         " satisfy the bound");
  // Minimal counterexample: equal widths.
  cost::AttnCostInputs eq = full_scale_geometry(64);
  eq.low_tokens = 256;
  eq.high_tokens = 300;
  eq.dec_heads = 32;
  eq.dec_head_dim = 32;
  const auto rq = cost::reduction_factor(eq);
  detail("r=1, L_lo=256, L_hi=300, L_T=64: exact " + fmt(rq.reduction_factor) + " vs bound " + fmt(rq.lower_bound));
  const double secs = seconds_since(t0);
  verdict(1, fixed_ok && violations == 0 && secs < 1.0,
          "lower bound at full-scale geometry " + std::string(fixed_ok ? "holds" : "fails") + "; random-config property " +
              (violations ? "fails" : "holds"),
          secs);
}

void criterion2() {
  const auto t0 = Clock::now();
  bool ok = true;
  for (auto [lt, expect] : {std::pair{512.0, 26.3}, std::pair{0.0, 86.2}}) {
    const auto c = full_scale_geometry(lt);
    const auto r = cost::reduction_factor(c);
    // Integer evaluation of T_original / T_improved.
    const long double s = 256 + lt, h = 6400 + lt;
    const long double orig = h * h * 4096.0L, impr = s * 6400.0L * 1024.0L + s * s * 4096.0L;
    const long double exact = orig / impr;
    const double rel = std::abs(static_cast<long double>(r.reduction_factor) - exact) / exact;
    const double rel_direct = std::abs(r.reduction_factor - r.direct_ratio) / r.direct_ratio;
    const bool rounds = std::abs(std::round(r.reduction_factor * 10) / 10 - expect) < 1e-12;
    const bool this_ok = rel <= 1e-9 && rel_direct <= 1e-9 && rounds && (lt != 512 || r.reduction_factor > 25);
    ok = ok && this_ok;
    detail("L_T=" + fmt(lt) + ": factor " + fmt(r.reduction_factor, 12) + " (reference " +
           fmt(static_cast<double>(exact), 12) + ", rel " + fmt(rel, 3) + ", expected ~" + fmt(expect) + ")");
  }
  verdict(2, ok, "reduction factor 26.3 at L_T=512 and 86.2 at L_T=0", seconds_since(t0));
}

void criterion3() {
  const auto t0 = Clock::now();
  const auto s = cost::ModelSpec::full_scale();
  const std::uint64_t lt = 128;
  const double b224 = cost::model_flops(s, 224, false, lt).tflops();
  const double b490 = cost::model_flops(s, 490, false, lt).tflops();
  const double c756 = cost::model_flops(s, 756, true, lt).tflops();
  const double c1120 = cost::model_flops(s, 1120, true, lt).tflops();
  const bool half = c1120 < 0.5 * b490;
  const bool order = b224 < c756 && c756 < c1120 && c1120 < b490;
  bool within = true;
  for (auto [got, ref, name] : {std::tuple{b224, 7.77, "224 base"}, std::tuple{c756, 10.08, "224+756 cross"},
                                std::tuple{c1120, 12.56, "224+1120 cross"}, std::tuple{b490, 29.14, "490 base"}}) {
    const double dev = (got - ref) / ref;
    within = within && std::abs(dev) <= 0.25;
    detail(std::string(name) + ": " + fmt(got, 4) + " TFLOPs vs " + fmt(ref) + " (" + fmt(100 * dev, 3) + "%)");
  }
  detail("1120 cross / 490 base = " + fmt(c1120 / b490, 4));
  const double secs = seconds_since(t0);
  verdict(3, half && order && within && secs < 1.0, "cross at 1120 below half of base at 490, ablation ordering and values",
          secs);
}

void criterion4() {
  const auto t0 = Clock::now();
  const auto rows = cost::sweep(cost::ModelSpec::full_scale(), {224, 490, 756, 1120}, 128);
  std::vector<double> x, yb, yc;
  for (const auto& r : rows) {
    x.push_back(static_cast<double>(r.patches));
    yb.push_back(r.flops_base);
    yc.push_back(r.flops_cross);
  }
  const auto lin = cost::fit_polynomial(x, yc, 1), quad = cost::fit_polynomial(x, yb, 2);
  detail("cross branch linear R^2 = " + fmt(lin.r2, 10) + "; base quadratic R^2 = " + fmt(quad.r2, 10));
  verdict(4, lin.r2 >= 0.99 && quad.r2 >= 0.99, "FLOPs linear in patches with cross module, quadratic without",
          seconds_since(t0));
}

void criterion5() {
  const auto t0 = Clock::now();
  const auto p = cost::param_count(cost::ModelSpec::full_scale());
  const double n = static_cast<double>(p.phase1_trainable()), f = p.phase1_fraction();
  detail("phase-1 trainable " + fmt(n / 1e6, 6) + "M of " + fmt(static_cast<double>(p.total()) / 1e9, 5) +
         "B total (" + fmt(100 * f, 4) + "%)");
  verdict(5, n >= 450e6 && n <= 840e6 && std::abs(f - 0.035) <= 0.01, "trainable-parameter anchor", seconds_since(t0));
}

void randomize(Parameter<float>& p, Rng& rng, double scale) {
  for (auto& v : p.value.data()) v = static_cast<float>(scale * rng.uniform(-1, 1));
}

void criterion6() {
  const auto t0 = Clock::now();
  harness::TrainConfig tc;
  decoder::ModelConfig with_cfg = tc.model, without_cfg = tc.model;
  with_cfg.seed = without_cfg.seed = 17;
  without_cfg.use_cross = false;
  decoder::Model<float> with(with_cfg), without(without_cfg);
  Rng rng(6, "criterion6");
  for (auto& p : with.params())
    if (p.group == ParamGroup::cross_module) randomize(p, rng, 0.3);
  for (std::size_t l = 0; l < with_cfg.decoder.layers; ++l)
    with.params().get("dec.layer" + std::to_string(l) + ".cross.wo").value.fill(0.0f);
  bool shared_equal = true;
  for (const auto& p : without.params()) shared_equal = shared_equal && with.params().get(p.name).value == p.value;

  double worst = 0;
  std::size_t inputs = 0;
  for (int chunk = 0; chunk < 10; ++chunk) {
    const std::size_t batch = 10;
    const auto len = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(with_cfg.decoder.max_text)));
    std::vector<encoder::ImageGrid> imgs;
    for (std::size_t b = 0; b < batch; ++b) {
      encoder::ImageGrid g(with_cfg.high.side, with_cfg.high.side, 1, 0.0);
      for (auto& v : g.pixels) v = rng.uniform();
      imgs.push_back(std::move(g));
    }
    std::vector<const encoder::ImageGrid*> ptrs;
    for (const auto& g : imgs) ptrs.push_back(&g);
    std::vector<int> ids(batch * len);
    for (auto& v : ids) v = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(with_cfg.decoder.vocab) - 1));
    Tape<float> ta, tb;
    ta.set_grad_enabled(false);
    tb.set_grad_enabled(false);
    const auto& la = ta.value(with.forward(ta, decoder::make_inputs<float>(with_cfg, ptrs, ids, len)));
    const auto& lb = tb.value(without.forward(tb, decoder::make_inputs<float>(without_cfg, ptrs, ids, len)));
    for (std::size_t i = 0; i < la.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(la[i] - lb[i])));
    inputs += batch;
  }
  const double secs = seconds_since(t0);
  detail(std::to_string(inputs) + " random inputs, max |delta logits| = " + fmt(worst, 3) +
         (shared_equal ? ", shared weights identical" : ", shared weights DIFFER"));
  verdict(6, shared_equal && worst <= 1e-6 && secs < 10.0, "zeroed cross output projection leaves logits unchanged", secs);
}

void criterion7() {
  const auto t0 = Clock::now();
  decoder::ModelConfig c;
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
  c.seed = 7;
  decoder::Model<double> m(c);
  Rng rng(7, "criterion7");
  const std::string prefix = "dec.layer0.";
  for (auto& p : m.params())
    if (p.name.rfind(prefix, 0) == 0)
      for (auto& v : p.value.data()) v = (p.name.find(".g") != std::string::npos ? 1.0 : 0.0) + 0.5 * rng.uniform(-1, 1);

  const std::size_t batch = 2, lo = c.low.tokens(), text = 3, seq = lo + text, hi = c.high.tokens();
  auto random = [&](Shape s) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data()) v = rng.uniform(-1, 1);
    return t;
  };
  const auto x0 = random({batch * seq, c.decoder.hidden}), xh = random({batch * hi, c.decoder.high_dim}),
             w = random({batch * seq, c.decoder.hidden});
  std::vector<std::uint8_t> mask(seq, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(lo), 1);
  std::vector<std::uint8_t> rows;
  for (std::size_t b = 0; b < batch; ++b) rows.insert(rows.end(), mask.begin(), mask.end());
  auto loss = [&](Tape<double>& t) {
    Var x = t.constant(x0), x_hi = t.constant(xh);
    x = m.msa_layer(t, 0, x, batch, mask);
    x = m.mca_layer(t, 0, x, x_hi, batch, seq, hi);
    x = m.ffn_layer(t, 0, x, rows);
    return ops::weighted_sum(t, x, w);
  };
  std::size_t tensors = 0;
  for (const auto& p : m.params()) tensors += p.name.rfind(prefix, 0) == 0;
  const auto r = grad_check(loss, m.params(), 1e-5, [&](const Parameter<double>& p) { return p.name.rfind(prefix, 0) == 0; });
  const double secs = seconds_since(t0);
  detail(std::to_string(tensors) + " tensors, " + std::to_string(r.checked) + " elements, max rel err " +
         fmt(r.max_rel_error, 3) + " (" + r.worst_param + ")");
  verdict(7, r.max_rel_error < 1e-4 && r.checked > 0 && secs < 60.0, "finite-difference check of a full decoder layer", secs);
}

void criterion8() {
  const auto t0 = Clock::now();
  double gap_sum = 0, longest = 0;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  for (auto seed : seeds) {
    double acc[2] = {0, 0};
    for (int cross = 1; cross >= 0; --cross) {
      harness::TrainConfig c;
      c.steps = 2000;
      c.phase1 = 0;
      c.freeze = harness::FreezeMode::none;
      c.stages = harness::parse_stages("hard-ocr@0:0,1,0,0");
      c.seed = seed;
      c.model.seed = seed;
      c.model.use_cross = cross == 1;
      decoder::Model<float> m(c.model);
      const auto t1 = Clock::now();
      const auto rec = harness::train(m, c);
      const auto r = harness::eval_text(m, harness::ocr_testset(harness::hard_ocr_spec(), 200, 1000 + seed));
      const double secs = seconds_since(t1);
      longest = std::max(longest, secs);
      acc[cross] = r.char_accuracy;
      detail("seed " + std::to_string(seed) + (cross ? " with cross   " : " without cross") + ": char accuracy " +
             fmt(r.char_accuracy, 4) + ", exact " + fmt(r.exact_match, 3) + ", final loss " +
             fmt(rec.log.back().loss, 4) + " (" + fmt(secs, 4) + " s)");
    }
    gap_sum += acc[1] - acc[0];
  }
  const double gap = 100 * gap_sum / static_cast<double>(seeds.size());
  const double secs = seconds_since(t0);
  detail("mean gap " + fmt(gap, 4) + " points; longest single run " + fmt(longest, 4) + " s");
  verdict(8, gap >= 20 && secs <= 1800 && longest <= 600, "high-resolution branch beats low-res-only model on 6-px glyphs",
          secs);
}

void criterion9() {
  const auto t0 = Clock::now();
  const std::regex grammar(R"(\[\[\d{3},\d{3},\d{3},\d{3}(;\d{3},\d{3},\d{3},\d{3})*\]\])");
  std::size_t samples = 0, grammar_bad = 0, roundtrip_bad = 0, parse_bad = 0;
  gui::PageSpec ps;
  ps.max_words = 1;
  for (std::uint64_t seed = 0; samples < 10000; ++seed) {
    const auto page = gui::gen_page(seed, gui::Resolution{448, 448}, ps);
    const int W = static_cast<int>(page.image.width), H = static_cast<int>(page.image.height);
    const auto recs = gui::make_rec(page);
    for (std::size_t i = 0; i < recs.size() && samples < 10000; ++i, ++samples) {
      const auto& ans = recs[i].answer;
      grammar_bad += !std::regex_match(ans, grammar);
      parse_bad += gui::format_boxes(gui::parse_boxes(ans)) != ans;
      const auto& b = page.elements[i].box;
      const auto d = gui::denormalize_box(recs[i].box, W, H);
      const double bx = std::max(1.0, W / 1000.0), by = std::max(1.0, H / 1000.0);
      roundtrip_bad += std::abs(d.left - b.left) > bx || std::abs(d.right - b.right) > bx ||
                       std::abs(d.top - b.top) > by || std::abs(d.bottom - b.bottom) > by;
    }
  }
  // Multi-box groups.
  Rng rng(9, "criterion9");
  for (int i = 0; i < 1000; ++i) {
    std::vector<gui::BoxCoord> g;
    for (auto k = rng.uniform_int(1, 4); k > 0; --k) {
      const int a = static_cast<int>(rng.uniform_int(0, 999)), b = static_cast<int>(rng.uniform_int(0, 999));
      g.push_back({std::min(a, b), std::min(a, b), std::max(a, b), std::max(a, b)});
    }
    const auto s = gui::format_boxes({g});
    grammar_bad += !std::regex_match(s, grammar);
    parse_bad += gui::parse_boxes(s) != std::vector<std::vector<gui::BoxCoord>>{g};
  }
  std::size_t action_bad = 0;
  const auto web = agent::load_web_steps(std::string(HICROSS_SOURCE_DIR) + "/data/fixtures/mind2web.jsonl");
  for (const auto& s : web) action_bad += agent::parse_action(agent::format_action(s.gold)) != s.gold;
  const double m2w = agent::step_sr(web).rate();
  const double aitw =
      agent::matching_score(agent::load_aitw_steps(std::string(HICROSS_SOURCE_DIR) + "/data/fixtures/aitw.jsonl")).rate();
  const double secs = seconds_since(t0);
  detail(std::to_string(samples) + " generated box strings: " + std::to_string(grammar_bad) + " grammar failures, " +
         std::to_string(roundtrip_bad) + " roundtrips off by more than a bucket, " + std::to_string(parse_bad + action_bad) +
         " parse/format mismatches");
  detail("Mind2Web fixture step SR " + fmt(m2w) + ", AITW fixture matching score " + fmt(aitw));
  verdict(9, grammar_bad == 0 && roundtrip_bad == 0 && parse_bad == 0 && action_bad == 0 && m2w == 0.5 && aitw == 0.6 &&
                 secs < 5.0,
          "box grammar, roundtrips and scorer fixtures", secs);
}

void criterion10() {
  const auto t0 = Clock::now();
  const auto dir = fs::temp_directory_path() / "hicross_acceptance_determinism";
  fs::remove_all(dir);
  std::string hash[2], log[2];
  bool ran = true;
  for (int i = 0; i < 2; ++i) {
    const auto out = dir / ("run" + std::to_string(i));
    const std::string cmd = std::string("\"") + HICROSS_CLI + "\" train --seed 7 --out \"" + out.string() + "\" > \"" +
                            (dir / ("stdout" + std::to_string(i))).string() + "\" 2>/dev/null";
    fs::create_directories(dir);
    const auto t1 = Clock::now();
    if (std::system(cmd.c_str()) != 0) {
      ran = false;
      detail("run " + std::to_string(i) + " failed");
      continue;
    }
    hash[i] = harness::file_hash((out / "checkpoint.bin").string());
    std::ifstream is(out / "log.csv");
    std::stringstream ss;
    ss << is.rdbuf();
    log[i] = ss.str();
    detail("run " + std::to_string(i) + ": checkpoint " + hash[i] + " (" + fmt(seconds_since(t1), 4) + " s)");
  }
  const bool ok = ran && hash[0] == hash[1] && !log[0].empty() && log[0] == log[1];
  detail(std::string("loss traces ") + (log[0] == log[1] ? "identical" : "differ"));
  fs::remove_all(dir);
  verdict(10, ok, "two train --seed 7 runs give identical checkpoints and loss traces", seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto want = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  void (*checks[])() = {criterion1, criterion2, criterion3, criterion4, criterion5,
                        criterion6, criterion7, criterion8, criterion9, criterion10};
  for (int n = 1; n <= 10; ++n) {
    if (!want(n)) continue;
    try {
      checks[n - 1]();
    } catch (const std::exception& e) {
      detail(std::string("exception: ") + e.what());
      verdict(n, false, "aborted", 0.0);
    }
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
