#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hicross/decoder/model.hpp"
#include "hicross/gui/boxes.hpp"
#include "hicross/harness/tasks.hpp"
#include "hicross/harness/vocab.hpp"

namespace hicross::harness {

/// Greedy decoding of up to `max_new` tokens after [BOS] prompt, for
/// samples sharing one prompt length. Encoders run once per chunk.
template <class T>
std::vector<std::string> greedy_decode(const decoder::Model<T>& model, const std::vector<const encoder::ImageGrid*>& images,
                                       const std::vector<std::string>& prompts, std::size_t max_new,
                                       std::size_t chunk = 64) {
  const Vocab vocab;
  std::vector<std::string> out(images.size());
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < prompts.size(); ++i) by_len[prompts[i].size()].push_back(i);
  const std::size_t max_text = model.config().decoder.max_text;
  for (const auto& [plen, all] : by_len) {
    for (std::size_t c0 = 0; c0 < all.size(); c0 += chunk) {
      const std::vector<std::size_t> idx(all.begin() + static_cast<std::ptrdiff_t>(c0),
                                         all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), c0 + chunk)));
      std::vector<const encoder::ImageGrid*> imgs;
      std::vector<std::vector<int>> seqs;
      for (auto i : idx) {
        imgs.push_back(images[i]);
        std::vector<int> s{Vocab::kBos};
        for (int t : vocab.encode(prompts[i])) s.push_back(t);
        seqs.push_back(std::move(s));
      }
      const auto in = decoder::make_inputs<T>(model.config(), imgs, {}, 1);
      Tape<T> tape;
      tape.set_grad_enabled(false);
      const auto enc = model.encode(tape, in.low_patches, in.high_patches ? &*in.high_patches : nullptr, in.batch);
      std::vector<bool> done(idx.size(), false);
      for (std::size_t step = 0; step < max_new && seqs[0].size() <= max_text; ++step) {
        const std::size_t len = seqs[0].size();
        std::vector<int> ids;
        for (const auto& s : seqs) ids.insert(ids.end(), s.begin(), s.end());
        const auto& logits = tape.value(model.decode(tape, enc, ids, len));
        const std::size_t V = logits.cols();
        bool all_done = true;
        for (std::size_t b = 0; b < idx.size(); ++b) {
          const T* row = logits.ptr() + (b * len + len - 1) * V;
          const int next = static_cast<int>(std::max_element(row, row + V) - row);
          seqs[b].push_back(done[b] ? Vocab::kPad : next);
          if (next == Vocab::kEos) done[b] = true;
          all_done = all_done && done[b];
        }
        if (all_done) break;
      }
      for (std::size_t b = 0; b < idx.size(); ++b)
        out[idx[b]] = vocab.decode(std::vector<int>(seqs[b].begin() + static_cast<std::ptrdiff_t>(plen + 1), seqs[b].end()));
    }
  }
  return out;
}

struct TextEvalResult {
  double char_accuracy = 0;  // matching characters at aligned positions / gold characters
  double exact_match = 0;
  std::size_t samples = 0;
};

inline TextEvalResult score_text(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
  TextEvalResult r;
  std::size_t hit = 0, total = 0, exact = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    for (std::size_t k = 0; k < golds[i].size(); ++k) hit += k < preds[i].size() && preds[i][k] == golds[i][k];
    total += golds[i].size();
    exact += preds[i] == golds[i];
  }
  r.samples = golds.size();
  r.char_accuracy = total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
  r.exact_match = r.samples ? static_cast<double>(exact) / static_cast<double>(r.samples) : 0.0;
  return r;
}

/// Held-out OCR screens; seeds are disjoint from the training stream.
inline std::vector<TextSample> ocr_testset(const gui::TextRenderSpec& spec, std::size_t n, std::uint64_t seed) {
  std::vector<TextSample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_ocr_sample(spec, mix_seed(mix_seed(seed, "eval-text"), i)));
  return out;
}

/// Character accuracy of greedy decodes on `testset`.
template <class T>
TextEvalResult eval_text(const decoder::Model<T>& model, const std::vector<TextSample>& testset) {
  std::vector<const encoder::ImageGrid*> imgs;
  std::vector<std::string> prompts, golds;
  std::size_t longest = 0;
  for (const auto& s : testset) {
    imgs.push_back(&s.screen.image);
    prompts.push_back(s.prompt);
    golds.push_back(s.answer);
    longest = std::max(longest, s.answer.size());
  }
  return score_text(greedy_decode(model, imgs, prompts, longest + 1), golds);
}

struct RecItem {
  TextSample sample;  // prompt is the REC question, answer the gold box string
  gui::BoxCoord gold;
};

/// REC questions on generated pages.
inline std::vector<RecItem> rec_testset(std::size_t n, std::uint64_t seed, gui::Resolution res = {448, 448}) {
  gui::PageSpec ps;
  ps.max_words = 1;
  ps.min_elements = 2;
  ps.max_elements = 4;
  std::vector<RecItem> out;
  for (std::size_t i = 0; out.size() < n; ++i) {
    const std::uint64_t s = mix_seed(mix_seed(seed, "eval-rec"), i);
    const auto screen = gui::gen_page(s, res, ps);
    const auto recs = gui::make_rec(screen);
    Rng rng(s, "rec-pick");
    const auto& r = recs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(recs.size()) - 1))];
    out.push_back({{screen, r.prompt, r.answer}, r.box});
  }
  return out;
}

struct RecEvalResult {
  double accuracy = 0;  // fraction with IoU >= 0.5
  std::size_t samples = 0;
  std::size_t unparsable = 0;
};

inline double box_iou(const gui::BoxCoord& a, const gui::BoxCoord& b) {
  return gui::iou({a.x0, a.y0, a.x1, a.y1}, {b.x0, b.y0, b.x1, b.y1});
}

/// Scores decoded answers: the first box of the first group is compared to
/// the gold box; anything that does not parse is a miss.
inline RecEvalResult score_rec(const std::vector<std::string>& decoded, const std::vector<RecItem>& items) {
  RecEvalResult r;
  r.samples = items.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      const auto groups = gui::parse_boxes(decoded[i]);
      hits += box_iou(groups.front().front(), items[i].gold) >= 0.5;
    } catch (const gui::BoxParseError&) {
      ++r.unparsable;
    }
  }
  r.accuracy = r.samples ? static_cast<double>(hits) / static_cast<double>(r.samples) : 0.0;
  return r;
}

using RecPredictor = std::function<std::vector<std::string>(const std::vector<RecItem>&)>;

inline RecEvalResult eval_rec(const RecPredictor& predict, const std::vector<RecItem>& items) {
  return score_rec(predict(items), items);
}

inline RecPredictor oracle_predictor() {
  return [](const std::vector<RecItem>& items) {
    std::vector<std::string> out;
    for (const auto& it : items) out.push_back(it.sample.answer);
    return out;
  };
}

/// Uniform random boxes: corners drawn independently and sorted per axis.
inline RecPredictor random_box_predictor(std::uint64_t seed) {
  return [seed](const std::vector<RecItem>& items) {
    Rng rng(seed, "random-box");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      int c[4];
      for (int& v : c) v = static_cast<int>(rng.uniform_int(0, 999));
      out.push_back(gui::format_boxes(
          gui::BoxCoord{std::min(c[0], c[2]), std::min(c[1], c[3]), std::max(c[0], c[2]), std::max(c[1], c[3])}));
    }
    return out;
  };
}

template <class T>
RecPredictor model_predictor(const decoder::Model<T>& model) {
  return [&model](const std::vector<RecItem>& items) {
    std::vector<const encoder::ImageGrid*> imgs;
    std::vector<std::string> prompts;
    for (const auto& it : items) {
      imgs.push_back(&it.sample.screen.image);
      prompts.push_back(it.sample.prompt);
    }
    return greedy_decode(model, imgs, prompts, 20);
  };
}

}  // namespace hicross::harness
