#pragma once

#include <array>
#include <string>
#include <vector>

#include "hicross/gui/boxes.hpp"
#include "hicross/gui/dataset.hpp"
#include "hicross/gui/page.hpp"
#include "hicross/gui/render.hpp"
#include "hicross/harness/vocab.hpp"

namespace hicross::harness {

/// The four training sources, in curriculum order.
enum class Source { easy_ocr = 0, hard_ocr = 1, grounding = 2, web = 3 };
inline constexpr std::array<const char*, 4> kSourceNames{"easy-ocr", "hard-ocr", "grounding", "web"};

inline Source source_from_name(const std::string& n) {
  for (std::size_t i = 0; i < kSourceNames.size(); ++i)
    if (n == kSourceNames[i]) return static_cast<Source>(i);
  throw std::invalid_argument("unknown data source '" + n + "'");
}

/// One rendered training or evaluation example.
struct TextSample {
  gui::SyntheticScreen screen;
  std::string prompt;
  std::string answer;
};

/// Large glyphs and short strings at a fixed anchor.
inline gui::TextRenderSpec easy_ocr_spec() {
  gui::TextRenderSpec s;
  s.glyph_px = 12;
  s.min_chars = 2;
  s.max_chars = 4;
  s.fixed_anchor = true;
  s.anchor_y = 44;
  return s;
}

/// 6-px glyphs, six characters on one line at a fixed anchor.
inline gui::TextRenderSpec hard_ocr_spec() {
  gui::TextRenderSpec s;
  s.glyph_px = 6;
  s.min_chars = 6;
  s.max_chars = 6;
  s.fixed_anchor = true;
  return s;
}

inline TextSample make_ocr_sample(const gui::TextRenderSpec& spec, std::uint64_t seed) {
  TextSample t;
  t.screen = gui::render_ocr_screen(spec, seed);
  t.prompt = gui::kOcrPrompt;
  t.answer = gui::ocr_transcript(t.screen);
  return t;
}

/// Several short words; the prompt names one and the answer is its box.
inline TextSample make_grounding_sample(std::uint64_t seed) {
  gui::TextRenderSpec s;
  s.glyph_px = 8;
  s.runs = 3;
  s.min_chars = 3;
  s.max_chars = 4;
  TextSample t;
  t.screen = gui::render_ocr_screen(s, seed);
  for (std::uint64_t k = 1; t.screen.elements.empty(); ++k) t.screen = gui::render_ocr_screen(s, seed + k * 7919);
  Rng rng(seed, "grounding-pick");
  const auto& els = t.screen.elements;
  const auto& e = els[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(els.size()) - 1))];
  t.prompt = gui::kGroundPrefix + e.text;
  t.answer = gui::format_boxes(gui::normalize_box(e.box, s.width, s.height));
  return t;
}

/// REC or REG on a small generated page; samples longer than `max_chars`
/// (prompt plus answer) are skipped in favour of the next element.
inline TextSample make_web_sample(std::uint64_t seed, std::size_t max_chars) {
  gui::PageSpec ps;
  ps.max_words = 1;
  ps.min_elements = 2;
  ps.max_elements = 4;
  for (std::uint64_t attempt = 0;; ++attempt) {
    TextSample t;
    t.screen = gui::gen_page(seed + attempt * 7919, gui::Resolution{448, 448}, ps);
    Rng rng(seed + attempt, "web-pick");
    const bool rec = rng.bernoulli(0.5);
    const auto recs = gui::make_rec(t.screen);
    const auto regs = gui::make_reg(t.screen);
    const auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(recs.size()) - 1));
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const std::size_t i = (first + k) % recs.size();
      t.prompt = rec ? recs[i].prompt : regs[i].prompt;
      t.answer = rec ? recs[i].answer : regs[i].answer;
      if (t.prompt.size() + t.answer.size() <= max_chars) return t;
    }
  }
}

inline TextSample make_sample(Source src, std::uint64_t seed, std::size_t max_chars) {
  switch (src) {
    case Source::easy_ocr: return make_ocr_sample(easy_ocr_spec(), seed);
    case Source::hard_ocr: return make_ocr_sample(hard_ocr_spec(), seed);
    case Source::grounding: return make_grounding_sample(seed);
    case Source::web: return make_web_sample(seed, max_chars);
  }
  throw std::logic_error("bad source");
}

/// Token layout of a batch: [BOS] prompt answer [EOS], shifted by one for
/// targets, padded to the longest sample. Only answer and EOS targets carry
/// weight.
struct TokenBatch {
  std::size_t text_len = 0;
  std::vector<int> ids;
  std::vector<int> targets;
  std::vector<double> weights;
};

inline TokenBatch tokenize(const std::vector<TextSample>& samples, const Vocab& vocab) {
  TokenBatch b;
  std::vector<std::vector<int>> seqs;
  std::vector<std::size_t> answer_start;
  for (const auto& s : samples) {
    std::vector<int> q{Vocab::kBos};
    for (int c : vocab.encode(s.prompt)) q.push_back(c);
    answer_start.push_back(q.size());
    for (int c : vocab.encode(s.answer)) q.push_back(c);
    q.push_back(Vocab::kEos);
    b.text_len = std::max(b.text_len, q.size() - 1);
    seqs.push_back(std::move(q));
  }
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& q = seqs[i];
    for (std::size_t t = 0; t < b.text_len; ++t) {
      const bool real = t + 1 < q.size();
      b.ids.push_back(t < q.size() ? q[t] : Vocab::kPad);
      b.targets.push_back(real ? q[t + 1] : Vocab::kPad);
      b.weights.push_back(real && t + 1 >= answer_start[i] ? 1.0 : 0.0);
    }
  }
  return b;
}

}  // namespace hicross::harness
