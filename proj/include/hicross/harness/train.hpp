#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hicross/decoder/model.hpp"
#include "hicross/harness/optim.hpp"
#include "hicross/harness/tasks.hpp"

namespace hicross::harness {

struct CurriculumStage {
  std::string name;
  std::array<double, 4> weights{};  // over easy-ocr, hard-ocr, grounding, web
  std::size_t start = 0;
};

/// easy-ocr, then hard-ocr, grounding and web, each entering at a quarter
/// of the run while earlier sources stay in the mix. Very short runs keep
/// starts strictly increasing (stage k no earlier than step k).
inline std::vector<CurriculumStage> default_curriculum(std::size_t steps) {
  auto at = [&](std::size_t k) { return std::max(k, k * steps / 4); };
  return {{"easy-ocr", {1, 0, 0, 0}, 0},
          {"hard-ocr", {0.3, 0.7, 0, 0}, at(1)},
          {"grounding", {0.1, 0.5, 0.4, 0}, at(2)},
          {"web", {0.1, 0.4, 0.25, 0.25}, at(3)}};
}

enum class FreezeMode {
  staged,  // phase 1: cross module only; phase 2: plus visual expert; base always frozen
  none    // everything trainable
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t warmup = 100;
  std::size_t batch = 16;
  double lr = 3e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-5;
  std::size_t phase1 = 800;
  FreezeMode freeze = FreezeMode::staged;
  std::vector<CurriculumStage> stages = default_curriculum(2000);
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  decoder::ModelConfig model;

  TrainConfig() {
    model.decoder.vocab = Vocab().size();
    model.decoder.max_text = 48;
  }

  void validate() const {
    if (steps == 0) throw std::invalid_argument("steps must be positive");
    if (phase1 > steps) throw std::invalid_argument("phase-1 steps exceed total steps");
    if (warmup > steps) throw std::invalid_argument("warmup exceeds total steps");
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    if (!(lr > 0) || weight_decay < 0) throw std::invalid_argument("bad learning rate or weight decay");
    if (stages.empty() || stages.front().start != 0) throw std::invalid_argument("first curriculum stage must start at 0");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (i && stages[i].start <= stages[i - 1].start)
        throw std::invalid_argument("curriculum stages must be ordered by strictly increasing start step");
      double sum = 0;
      for (double w : stages[i].weights) {
        if (w < 0) throw std::invalid_argument("negative mix weight in stage " + stages[i].name);
        sum += w;
      }
      if (sum <= 0) throw std::invalid_argument("stage " + stages[i].name + " has no positive mix weight");
    }
    model.validate();
  }

  std::size_t stage_at(std::size_t step) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < stages.size(); ++i)
      if (stages[i].start <= step) s = i;
    return s;
  }
};

inline std::string freeze_name(FreezeMode m) { return m == FreezeMode::staged ? "staged" : "none"; }

inline FreezeMode freeze_from_name(const std::string& s) {
  if (s == "staged") return FreezeMode::staged;
  if (s == "none") return FreezeMode::none;
  throw std::invalid_argument("freeze mode must be 'staged' or 'none', got '" + s + "'");
}

/// "name@start:w0,w1,w2,w3" separated by ';'.
inline std::vector<CurriculumStage> parse_stages(const std::string& text) {
  std::vector<CurriculumStage> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto at = item.find('@'), colon = item.find(':');
    if (at == std::string::npos || colon == std::string::npos || colon < at)
      throw std::invalid_argument("bad stage '" + item + "', expected name@start:w0,w1,w2,w3");
    CurriculumStage st;
    st.name = item.substr(0, at);
    st.start = std::stoul(item.substr(at + 1, colon - at - 1));
    std::stringstream ws(item.substr(colon + 1));
    std::string w;
    std::size_t k = 0;
    while (std::getline(ws, w, ',')) {
      if (k >= 4) throw std::invalid_argument("stage '" + st.name + "' has more than four weights");
      st.weights[k++] = std::stod(w);
    }
    if (k != 4) throw std::invalid_argument("stage '" + st.name + "' needs four weights");
    out.push_back(st);
  }
  return out;
}

inline std::string format_stages(const std::vector<CurriculumStage>& stages) {
  std::ostringstream os;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    os << (i ? ";" : "") << stages[i].name << '@' << stages[i].start << ':';
    for (std::size_t k = 0; k < 4; ++k) os << (k ? "," : "") << stages[i].weights[k];
  }
  return os.str();
}

/// Flat key=value text; '#' starts a comment. Unknown keys are errors.
inline void apply_config_text(TrainConfig& c, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(n) + ": expected key=value");
    const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    auto u = [&] { return static_cast<std::size_t>(std::stoull(v)); };
    if (k == "steps") c.steps = u();
    else if (k == "warmup") c.warmup = u();
    else if (k == "batch") c.batch = u();
    else if (k == "lr") c.lr = std::stod(v);
    else if (k == "weight_decay") c.weight_decay = std::stod(v);
    else if (k == "beta1") c.beta1 = std::stod(v);
    else if (k == "beta2") c.beta2 = std::stod(v);
    else if (k == "eps") c.eps = std::stod(v);
    else if (k == "phase1") c.phase1 = u();
    else if (k == "freeze") c.freeze = freeze_from_name(v);
    else if (k == "stages") c.stages = parse_stages(v);
    else if (k == "seed") c.seed = std::stoull(v);
    else if (k == "log_every") c.log_every = u();
    else if (k == "use_cross") c.model.use_cross = v == "1" || v == "true";
    else if (k == "dec.layers") c.model.decoder.layers = u();
    else if (k == "dec.hidden") c.model.decoder.hidden = u();
    else if (k == "dec.heads") c.model.decoder.heads = u();
    else if (k == "dec.max_text") c.model.decoder.max_text = u();
    else if (k == "cross.hidden") c.model.decoder.cross_hidden = u();
    else if (k == "cross.heads") c.model.decoder.cross_heads = u();
    else throw std::invalid_argument("config line " + std::to_string(n) + ": unknown key '" + k + "'");
  }
}

inline void apply_config_file(TrainConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  apply_config_text(c, ss.str());
}

struct StepLog {
  std::size_t step = 0;
  std::string stage;
  double loss = 0;
  double lr = 0;
};

struct RunRecord {
  std::vector<StepLog> log;        // every step
  std::size_t trainable_phase1 = 0;
  std::size_t trainable_phase2 = 0;
  double wall_seconds = 0;

  std::string csv() const {
    std::ostringstream os;
    os << "step,stage,loss,lr\n" << std::setprecision(9);
    for (const auto& s : log) os << s.step << ',' << s.stage << ',' << s.loss << ',' << s.lr << '\n';
    return os.str();
  }
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Samples of one batch: the source of each slot is drawn from the stage
/// mix, and every screen seed derives from (run seed, step, slot).
inline std::vector<TextSample> draw_batch(const TrainConfig& c, std::size_t step) {
  const auto& st = c.stages[c.stage_at(step)];
  Rng rng(mix_seed(c.seed, step), "batch");
  double total = 0;
  for (double w : st.weights) total += w;
  std::vector<TextSample> out;
  const std::size_t max_chars = c.model.decoder.max_text - 1;
  for (std::size_t b = 0; b < c.batch; ++b) {
    double u = rng.uniform() * total;
    std::size_t k = 0;
    while (k < 3 && (u -= st.weights[k]) >= 0) ++k;
    while (st.weights[k] == 0) --k;
    const std::uint64_t seed = mix_seed(mix_seed(c.seed, step), b + 1);
    out.push_back(make_sample(static_cast<Source>(k), seed, max_chars));
  }
  return out;
}

/// Applies the freeze schedule for `step`.
template <class T>
void apply_freeze(decoder::Model<T>& m, const TrainConfig& c, std::size_t step) {
  auto& p = m.params();
  if (c.freeze == FreezeMode::none) {
    for (auto g : {ParamGroup::base, ParamGroup::visual_expert, ParamGroup::cross_module}) p.set_frozen(g, false);
    return;
  }
  p.set_frozen(ParamGroup::base, true);
  p.set_frozen(ParamGroup::cross_module, false);
  p.set_frozen(ParamGroup::visual_expert, step < c.phase1);
}

/// Runs the configured schedule on `model`. Throws TrainingError on a
/// non-finite loss.
template <class T>
RunRecord train(decoder::Model<T>& model, const TrainConfig& c) {
  c.validate();
  const Vocab vocab;
  if (model.config().decoder.vocab < vocab.size()) throw std::invalid_argument("model vocabulary smaller than the character set");
  AdamW<T> opt({c.beta1, c.beta2, c.eps, c.weight_decay});
  RunRecord rec;
  const auto t0 = std::chrono::steady_clock::now();
  apply_freeze(model, c, 0);
  rec.trainable_phase1 = model.params().trainable_count();
  apply_freeze(model, c, c.phase1);
  rec.trainable_phase2 = model.params().trainable_count();
  for (std::size_t step = 0; step < c.steps; ++step) {
    apply_freeze(model, c, step);
    const auto samples = draw_batch(c, step);
    const TokenBatch tb = tokenize(samples, vocab);
    std::vector<const encoder::ImageGrid*> imgs;
    for (const auto& s : samples) imgs.push_back(&s.screen.image);
    const auto in = decoder::make_inputs<T>(model.config(), imgs, tb.ids, tb.text_len);
    std::vector<T> w(tb.weights.begin(), tb.weights.end());
    model.params().zero_grad();
    const std::string& stage = c.stages[c.stage_at(step)].name;
    auto fail = [&](const std::string& why) {
      return TrainingError(why + " at step " + std::to_string(step) + " in stage " + stage);
    };
    Tape<T> tape;
    Var loss;
    try {
      loss = ops::cross_entropy(tape, model.forward(tape, in), tb.targets, w);
    } catch (const NumericError& e) {
      throw fail(std::string("non-finite loss (") + e.what() + ")");
    }
    const double lv = static_cast<double>(tape.value(loss)[0]);
    if (!std::isfinite(lv)) throw fail("non-finite loss");
    tape.backward(loss);
    const double lr = lr_at(step + 1, c.warmup, c.steps, c.lr);
    opt.step(model.params(), lr);
    rec.log.push_back({step, stage, lv, lr});
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace hicross::harness
