#pragma once

#include <vector>

#include "hicross/cost/cost_model.hpp"
#include "hicross/decoder/model.hpp"
#include "hicross/numerics/rng.hpp"

namespace hicross::cost {

/// Runs one counted forward pass of a desk model on random images and text
/// and sets the kernel counters against the analytical accounting. Rows:
/// self-attention core, cross-attention core, and the whole forward pass.
inline std::vector<MeasureRow> measure_vs_model(const decoder::ModelConfig& cfg, std::size_t batch,
                                                std::size_t text_len, std::uint64_t seed = 0) {
  decoder::Model<float> model(cfg);
  Rng rng(seed, "measure");
  std::vector<encoder::ImageGrid> images;
  const std::size_t side = cfg.use_cross ? cfg.high.side : cfg.low.side;
  for (std::size_t b = 0; b < batch; ++b) {
    encoder::ImageGrid g(side, side, cfg.low.channels, 0.0);
    for (auto& v : g.pixels) v = rng.uniform();
    images.push_back(std::move(g));
  }
  std::vector<const encoder::ImageGrid*> ptrs;
  for (const auto& g : images) ptrs.push_back(&g);
  std::vector<int> ids(batch * text_len);
  for (auto& id : ids) id = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.decoder.vocab) - 1));
  const auto in = decoder::make_inputs<float>(cfg, ptrs, ids, text_len);

  FlopCounter counter;
  Tape<float> tape(&counter);
  tape.set_grad_enabled(false);
  model.forward(tape, in);

  const ModelSpec spec = ModelSpec::from_config(cfg);
  FlopConvention conv;
  conv.encoder_attention_scores = true;
  const FlopReport rep = model_flops(spec, cfg.use_cross ? cfg.high.side : cfg.low.side, cfg.use_cross, text_len, conv);
  const double B = static_cast<double>(batch);
  std::vector<MeasureRow> rows;
  rows.push_back({"attn.self", static_cast<double>(counter.get("attn.self")), B * rep.sum("dec.attn_core")});
  rows.push_back({"attn.cross", static_cast<double>(counter.get("attn.cross")), B * rep.sum("cross.attn_core")});
  rows.push_back({"forward", static_cast<double>(counter.total()), B * rep.total});
  return rows;
}

}  // namespace hicross::cost
