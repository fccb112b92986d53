#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hicross/decoder/config.hpp"
#include "hicross/encoder/encoder.hpp"
#include "hicross/numerics/init.hpp"
#include "hicross/numerics/ops.hpp"

namespace hicross::decoder {

/// Disjoint, exhaustive partition of a model's parameters.
struct ParamGroups {
  std::vector<std::string> cross_module;
  std::vector<std::string> visual_expert;
  std::vector<std::string> base;
  std::size_t cross_module_count = 0;
  std::size_t visual_expert_count = 0;
  std::size_t base_count = 0;

  std::size_t total() const { return cross_module_count + visual_expert_count + base_count; }
};

/// Inputs for one forward pass. Sequence layout per sample is
/// [low-res image tokens | text tokens].
template <class T>
struct ModelInputs {
  std::size_t batch = 0;
  std::size_t text_len = 0;
  Tensor<T> low_patches;                  // [batch * L_lo, patch_dim]
  std::optional<Tensor<T>> high_patches;  // [batch * L_hi, patch_dim]
  std::vector<int> ids;                   // [batch * text_len]
};

/// Dual-resolution vision-language decoder. Each decoder layer runs
///   X'   = MSA(layernorm(X_in)) + X_in     (visual expert on image rows)
///   Xout = MCA(layernorm(X'), X_hi) + X'   (cross-attention into X_hi)
/// followed by a pre-norm GELU FFN (also expert-routed) with residual.
template <class T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)), store_(std::make_unique<ParamStore<T>>()) {
    cfg_.validate();
    if (cfg_.low.side % cfg_.low.patch != 0) throw DimensionError("low side not divisible by patch");
    const std::uint64_t seed = cfg_.seed;
    auto& s = *store_;
    low_ = std::make_unique<encoder::VisionEncoder<T>>("enc_lo", cfg_.low, s, ParamGroup::base, seed);
    if (cfg_.use_cross)
      high_ = std::make_unique<encoder::VisionEncoder<T>>("enc_hi", cfg_.high, s, ParamGroup::cross_module, seed);

    const auto& d = cfg_.decoder;
    const std::size_t D = d.hidden, F = d.hidden * d.ffn_mult, Dc = d.cross_hidden;
    auto w = [&](const std::string& n, std::size_t fi, std::size_t fo, ParamGroup g) {
      s.add(n, init::xavier_uniform<T>(fi, fo, seed, n), g);
    };
    auto c = [&](const std::string& n, std::size_t len, T v, ParamGroup g) { s.add(n, init::constant<T>({len}, v), g); };
    const auto B = ParamGroup::base, E = ParamGroup::visual_expert, X = ParamGroup::cross_module;

    w("adapter.w", cfg_.low.hidden, D, B);
    c("adapter.b", D, T{0}, B);
    s.add("dec.tok", init::normal<T>({d.vocab, D}, 0.02, seed, "dec.tok"), B);
    s.add("dec.pos", init::normal<T>({d.max_text, D}, 0.02, seed, "dec.pos"), B);
    for (std::size_t l = 0; l < d.layers; ++l) {
      const std::string p = layer_prefix(l);
      c(p + "ln1.g", D, T{1}, B);
      c(p + "ln1.b", D, T{0}, B);
      w(p + "attn.qkv", D, 3 * D, B);
      w(p + "attn.qkv_expert", D, 3 * D, E);
      w(p + "attn.out", D, D, B);
      if (cfg_.use_cross) {
        c(p + "cross.ln.g", D, T{1}, X);
        c(p + "cross.ln.b", D, T{0}, X);
        w(p + "cross.wq", D, Dc, X);
        w(p + "cross.wk", d.high_dim, Dc, X);
        w(p + "cross.wv", d.high_dim, Dc, X);
        // Zero output projection: a freshly attached cross module is an exact identity.
        s.add(p + "cross.wo", Tensor<T>({Dc, D}), X);
      }
      c(p + "ln2.g", D, T{1}, B);
      c(p + "ln2.b", D, T{0}, B);
      for (const std::string f : {"ffn.", "ffn_expert."}) {
        const auto g = f == "ffn." ? B : E;
        w(p + f + "w1", D, F, g);
        c(p + f + "b1", F, T{0}, g);
        w(p + f + "w2", F, D, g);
        c(p + f + "b2", D, T{0}, g);
      }
    }
    c("dec.ln_f.g", D, T{1}, B);
    c("dec.ln_f.b", D, T{0}, B);
    w("dec.head", D, d.vocab, B);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return *store_; }
  const ParamStore<T>& params() const { return *store_; }
  bool has_cross() const { return cfg_.use_cross; }

  std::size_t low_tokens() const { return cfg_.low.tokens(); }
  std::size_t high_tokens() const { return cfg_.use_cross ? cfg_.high.tokens() : 0; }

  struct Encoded {
    Var low;  // adapted to decoder width: [batch * L_lo, D_dec]
    std::optional<Var> high;
    std::size_t batch = 0;
    std::size_t high_len = 0;
  };

  Encoded encode(Tape<T>& tape, const Tensor<T>& low_patches, const Tensor<T>* high_patches, std::size_t batch) const {
    Encoded e;
    e.batch = batch;
    Var lo = low_->forward(tape, low_patches, batch);
    lo = ops::add_bias(tape, ops::matmul(tape, lo, P(tape, "adapter.w"), "adapter"), P(tape, "adapter.b"));
    e.low = lo;
    if (cfg_.use_cross) {
      if (!high_patches) throw DimensionError("model with cross module requires high-resolution patches");
      e.high = high_->forward(tape, *high_patches, batch);
      e.high_len = cfg_.high.tokens();
    }
    return e;
  }

  /// Self-attention sublayer with visual-expert routing. image_mask has one
  /// entry per sequence position; image positions must form the prefix.
  Var msa_layer(Tape<T>& tape, std::size_t layer, Var x, std::size_t batch,
                const std::vector<std::uint8_t>& image_mask) const {
    const auto& d = cfg_.decoder;
    const std::size_t seq = image_mask.size();
    if (tape.value(x).rows() != batch * seq)
      throw DimensionError("msa_layer: mask length " + std::to_string(seq) + " does not match sequence of " +
                           std::to_string(tape.value(x).rows() / std::max<std::size_t>(batch, 1)));
    const std::size_t prefix = image_prefix(image_mask);
    const std::vector<std::uint8_t> rows = row_mask(image_mask, batch);
    const std::string p = layer_prefix(layer);
    const std::size_t D = d.hidden;
    Var n = ops::layernorm(tape, x, P(tape, p + "ln1.g"), P(tape, p + "ln1.b"));
    Var qkv = route(tape, rows, n, p + "attn.qkv_expert", p + "attn.qkv", "dec.proj");
    const kernels::AttnGeometry geo{batch, seq, seq, d.heads, d.head_dim(), d.head_dim(), true, prefix};
    Var a = ops::attention(tape, ops::slice_cols(tape, qkv, 0, D), ops::slice_cols(tape, qkv, D, D),
                           ops::slice_cols(tape, qkv, 2 * D, D), geo, "attn.self");
    a = ops::matmul(tape, a, P(tape, p + "attn.out"), "dec.proj");
    return ops::add(tape, a, x);
  }

  /// Cross-attention sublayer: queries from layernorm(x), keys/values from
  /// the high-resolution tokens, output projected back and added to x.
  Var mca_layer(Tape<T>& tape, std::size_t layer, Var x, Var x_hi, std::size_t batch, std::size_t seq,
                std::size_t hi_len) const {
    if (!cfg_.use_cross) throw std::logic_error("mca_layer on a model without cross module");
    const auto& d = cfg_.decoder;
    if (hi_len == 0) throw DimensionError("mca_layer: empty high-resolution sequence");
    if (tape.value(x_hi).cols() != d.high_dim)
      throw DimensionError("mca_layer: X_hi width " + std::to_string(tape.value(x_hi).cols()) +
                           " != configured high_dim " + std::to_string(d.high_dim));
    if (tape.value(x_hi).rows() != batch * hi_len) throw DimensionError("mca_layer: X_hi rows mismatch");
    const std::string p = layer_prefix(layer);
    Var n = ops::layernorm(tape, x, P(tape, p + "cross.ln.g"), P(tape, p + "cross.ln.b"));
    Var q = ops::matmul(tape, n, P(tape, p + "cross.wq"), "cross.proj");
    Var k = ops::matmul(tape, x_hi, P(tape, p + "cross.wk"), "cross.proj");
    Var v = ops::matmul(tape, x_hi, P(tape, p + "cross.wv"), "cross.proj");
    const kernels::AttnGeometry geo{batch, seq, hi_len, d.cross_heads, d.cross_head_dim(), d.cross_head_dim(), false, 0};
    Var a = ops::attention(tape, q, k, v, geo, "attn.cross");
    a = ops::matmul(tape, a, P(tape, p + "cross.wo"), "cross.proj");
    return ops::add(tape, a, x);
  }

  Var ffn_layer(Tape<T>& tape, std::size_t layer, Var x, const std::vector<std::uint8_t>& rows) const {
    const std::string p = layer_prefix(layer);
    Var n = ops::layernorm(tape, x, P(tape, p + "ln2.g"), P(tape, p + "ln2.b"));
    auto mlp = [&](Var in, const std::string& f) {
      Var h = ops::gelu(tape, ops::add_bias(tape, ops::matmul(tape, in, P(tape, p + f + "w1"), "dec.ffn"),
                                            P(tape, p + f + "b1")));
      return ops::add_bias(tape, ops::matmul(tape, h, P(tape, p + f + "w2"), "dec.ffn"), P(tape, p + f + "b2"));
    };
    const Routing r = split(rows);
    std::optional<Var> fe, fb;
    if (!r.image.empty()) fe = mlp(ops::gather_rows(tape, n, r.image), "ffn_expert.");
    if (!r.text.empty()) fb = mlp(ops::gather_rows(tape, n, r.text), "ffn.");
    return ops::add(tape, ops::merge_rows(tape, rows, fe, fb), x);
  }

  /// Embeds text, runs every layer and returns logits at text positions,
  /// [batch * text_len, vocab].
  Var decode(Tape<T>& tape, const Encoded& enc, const std::vector<int>& ids, std::size_t text_len) const {
    const auto& d = cfg_.decoder;
    const std::size_t batch = enc.batch, lo = low_tokens(), seq = lo + text_len;
    if (text_len == 0 || text_len > d.max_text)
      throw DimensionError("text length " + std::to_string(text_len) + " outside [1, " + std::to_string(d.max_text) + "]");
    if (ids.size() != batch * text_len) throw DimensionError("decode: ids length != batch * text_len");
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= d.vocab)
        throw DimensionError("token id " + std::to_string(id) + " overflows vocabulary of " + std::to_string(d.vocab));
    Var text = ops::embedding(tape, P(tape, "dec.tok"), ids);
    text = ops::add_positional(tape, text, P(tape, "dec.pos"), text_len);
    Var x = ops::concat_seq(tape, enc.low, text, batch, lo, text_len);
    std::vector<std::uint8_t> mask(seq, 0);
    std::fill_n(mask.begin(), lo, std::uint8_t{1});
    const auto rows = row_mask(mask, batch);
    for (std::size_t l = 0; l < d.layers; ++l) {
      x = msa_layer(tape, l, x, batch, mask);
      if (cfg_.use_cross) x = mca_layer(tape, l, x, *enc.high, batch, seq, enc.high_len);
      x = ffn_layer(tape, l, x, rows);
    }
    x = ops::slice_seq(tape, x, batch, seq, lo, text_len);
    x = ops::layernorm(tape, x, P(tape, "dec.ln_f.g"), P(tape, "dec.ln_f.b"));
    return ops::matmul(tape, x, P(tape, "dec.head"), "dec.head");
  }

  Var forward(Tape<T>& tape, const ModelInputs<T>& in) const {
    const Tensor<T>* hi = in.high_patches ? &*in.high_patches : nullptr;
    Encoded e = encode(tape, in.low_patches, cfg_.use_cross ? hi : nullptr, in.batch);
    return decode(tape, e, in.ids, in.text_len);
  }

  ParamGroups param_groups() const {
    ParamGroups g;
    for (const auto& p : *store_) {
      switch (p.group) {
        case ParamGroup::cross_module:
          g.cross_module.push_back(p.name);
          g.cross_module_count += p.value.size();
          break;
        case ParamGroup::visual_expert:
          g.visual_expert.push_back(p.name);
          g.visual_expert_count += p.value.size();
          break;
        case ParamGroup::base:
          g.base.push_back(p.name);
          g.base_count += p.value.size();
          break;
      }
    }
    return g;
  }

  static std::string layer_prefix(std::size_t l) { return "dec.layer" + std::to_string(l) + "."; }

 private:
  Var P(Tape<T>& tape, const std::string& name) const { return tape.param(store_->get(name)); }

  struct Routing {
    std::vector<std::size_t> image, text;
  };

  static Routing split(const std::vector<std::uint8_t>& rows) {
    Routing r;
    for (std::size_t i = 0; i < rows.size(); ++i) (rows[i] ? r.image : r.text).push_back(i);
    return r;
  }

  /// Image rows through `expert`, text rows through `base`; each row is
  /// multiplied exactly once.
  Var route(Tape<T>& tape, const std::vector<std::uint8_t>& rows, Var x, const std::string& expert,
            const std::string& base, const std::string& cat) const {
    const Routing r = split(rows);
    std::optional<Var> e, b;
    if (!r.image.empty()) e = ops::matmul(tape, ops::gather_rows(tape, x, r.image), P(tape, expert), cat);
    if (!r.text.empty()) b = ops::matmul(tape, ops::gather_rows(tape, x, r.text), P(tape, base), cat);
    return ops::merge_rows(tape, rows, e, b);
  }

  static std::size_t image_prefix(const std::vector<std::uint8_t>& mask) {
    std::size_t n = 0;
    while (n < mask.size() && mask[n]) ++n;
    for (std::size_t i = n; i < mask.size(); ++i)
      if (mask[i]) throw DimensionError("image positions must precede text positions");
    return n;
  }

  static std::vector<std::uint8_t> row_mask(const std::vector<std::uint8_t>& mask, std::size_t batch) {
    std::vector<std::uint8_t> rows;
    rows.reserve(mask.size() * batch);
    for (std::size_t b = 0; b < batch; ++b) rows.insert(rows.end(), mask.begin(), mask.end());
    return rows;
  }

  ModelConfig cfg_;
  std::unique_ptr<ParamStore<T>> store_;
  std::unique_ptr<encoder::VisionEncoder<T>> low_;
  std::unique_ptr<encoder::VisionEncoder<T>> high_;
};

/// Stacks per-sample images for both branches.
template <class T>
ModelInputs<T> make_inputs(const ModelConfig& cfg, const std::vector<const encoder::ImageGrid*>& images,
                           std::vector<int> ids, std::size_t text_len) {
  ModelInputs<T> in;
  in.batch = images.size();
  in.text_len = text_len;
  in.low_patches = encoder::VisionEncoder<T>::stack_patches(images, cfg.low);
  if (cfg.use_cross) in.high_patches = encoder::VisionEncoder<T>::stack_patches(images, cfg.high);
  in.ids = std::move(ids);
  return in;
}

}  // namespace hicross::decoder
