#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hicross/encoder/image.hpp"
#include "hicross/numerics/init.hpp"
#include "hicross/numerics/ops.hpp"

namespace hicross::encoder {

struct EncoderConfig {
  std::size_t side = 28;  // input resolution (square)
  std::size_t patch = 14;
  std::size_t channels = 1;
  std::size_t layers = 1;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  std::size_t tokens() const { return (side / patch) * (side / patch); }
  std::size_t patch_dim() const { return patch * patch * channels; }

  void validate() const {
    if (patch == 0 || side == 0 || side % patch != 0)
      throw DimensionError("encoder: patch " + std::to_string(patch) + " must divide side " + std::to_string(side));
    if (heads == 0 || hidden % heads != 0)
      throw DimensionError("encoder: hidden " + std::to_string(hidden) + " not divisible by heads " +
                           std::to_string(heads));
    if (channels != 1 && channels != 3) throw DimensionError("encoder: channels must be 1 or 3");
  }
};

/// Pre-norm ViT-style encoder over raw patch tokens with learned positional
/// embeddings. With zero layers it is a plain linear patch projection plus
/// position embedding (no final norm).
template <class T>
class VisionEncoder {
 public:
  VisionEncoder(std::string prefix, EncoderConfig cfg, ParamStore<T>& store, ParamGroup group, std::uint64_t seed)
      : prefix_(std::move(prefix)), cfg_(cfg), store_(&store) {
    cfg_.validate();
    const std::size_t h = cfg_.hidden, m = cfg_.hidden * cfg_.mlp_ratio, p = cfg_.patch_dim();
    auto add_w = [&](const std::string& n, std::size_t fi, std::size_t fo) {
      store.add(name(n), init::xavier_uniform<T>(fi, fo, seed, name(n)), group);
    };
    auto add_c = [&](const std::string& n, std::size_t len, T v) {
      store.add(name(n), init::constant<T>({len}, v), group);
    };
    add_w("patch.w", p, h);
    add_c("patch.b", h, T{0});
    store.add(name("pos"), init::normal<T>({cfg_.tokens(), h}, 0.02, seed, name("pos")), group);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string b = "block" + std::to_string(l) + ".";
      add_c(b + "ln1.g", h, T{1});
      add_c(b + "ln1.b", h, T{0});
      add_w(b + "qkv.w", h, 3 * h);
      add_c(b + "qkv.b", 3 * h, T{0});
      add_w(b + "out.w", h, h);
      add_c(b + "out.b", h, T{0});
      add_c(b + "ln2.g", h, T{1});
      add_c(b + "ln2.b", h, T{0});
      add_w(b + "fc1.w", h, m);
      add_c(b + "fc1.b", m, T{0});
      add_w(b + "fc2.w", m, h);
      add_c(b + "fc2.b", h, T{0});
    }
    if (cfg_.layers > 0) {
      add_c("ln_f.g", h, T{1});
      add_c("ln_f.b", h, T{0});
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  /// patches: [batch * tokens, patch_dim] -> [batch * tokens, hidden]
  Var forward(Tape<T>& tape, const Tensor<T>& patches, std::size_t batch) const {
    const std::size_t len = cfg_.tokens(), h = cfg_.hidden;
    if (patches.cols() != cfg_.patch_dim() || patches.rows() != batch * len)
      throw DimensionError("encoder " + prefix_ + ": expected [" + std::to_string(batch * len) + "," +
                           std::to_string(cfg_.patch_dim()) + "] patches, got " + shape_str(patches.shape()));
    auto P = [&](const std::string& n) { return tape.param(store_->get(name(n))); };
    Var x = tape.constant(patches.reshaped({patches.rows(), patches.cols()}), "patches");
    x = ops::add_bias(tape, ops::matmul(tape, x, P("patch.w"), "enc.proj"), P("patch.b"));
    x = ops::add_positional(tape, x, P("pos"), len);
    const kernels::AttnGeometry geo{batch, len, len, cfg_.heads, h / cfg_.heads, h / cfg_.heads, false, 0};
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string b = "block" + std::to_string(l) + ".";
      Var n1 = ops::layernorm(tape, x, P(b + "ln1.g"), P(b + "ln1.b"));
      Var qkv = ops::add_bias(tape, ops::matmul(tape, n1, P(b + "qkv.w"), "enc.proj"), P(b + "qkv.b"));
      Var a = ops::attention(tape, ops::slice_cols(tape, qkv, 0, h), ops::slice_cols(tape, qkv, h, h),
                             ops::slice_cols(tape, qkv, 2 * h, h), geo, "enc.attn");
      a = ops::add_bias(tape, ops::matmul(tape, a, P(b + "out.w"), "enc.proj"), P(b + "out.b"));
      x = ops::add(tape, x, a);
      Var n2 = ops::layernorm(tape, x, P(b + "ln2.g"), P(b + "ln2.b"));
      Var f = ops::gelu(tape, ops::add_bias(tape, ops::matmul(tape, n2, P(b + "fc1.w"), "enc.ffn"), P(b + "fc1.b")));
      f = ops::add_bias(tape, ops::matmul(tape, f, P(b + "fc2.w"), "enc.ffn"), P(b + "fc2.b"));
      x = ops::add(tape, x, f);
    }
    if (cfg_.layers > 0) x = ops::layernorm(tape, x, P("ln_f.g"), P("ln_f.b"));
    return x;
  }

  /// Resize each image to the configured side, standardize its pixels to zero
  /// mean and unit variance, and stack its patches.
  static Tensor<T> stack_patches(const std::vector<const ImageGrid*>& images, const EncoderConfig& cfg) {
    const std::size_t len = cfg.tokens(), dim = cfg.patch_dim();
    Tensor<T> out({images.size() * len, dim});
    for (std::size_t i = 0; i < images.size(); ++i) {
      const ImageGrid& src = *images[i];
      if (src.channels != cfg.channels) throw DimensionError("encoder: image channel count mismatch");
      ImageGrid sized = (src.width == cfg.side && src.height == cfg.side) ? src : resize(src, cfg.side);
      standardize(sized);
      const auto tok = patchify<T>(sized, cfg.patch);
      std::copy(tok.tokens.data().begin(), tok.tokens.data().end(), out.ptr() + i * len * dim);
    }
    return out;
  }

  static void standardize(ImageGrid& img) {
    const double n = static_cast<double>(img.pixels.size());
    double mean = 0.0, var = 0.0;
    for (double v : img.pixels) mean += v;
    mean /= n;
    for (double v : img.pixels) var += (v - mean) * (v - mean);
    const double inv = 1.0 / std::sqrt(var / n + 1e-4);
    for (double& v : img.pixels) v = (v - mean) * inv;
  }

 private:
  std::string name(const std::string& n) const { return prefix_ + "." + n; }

  std::string prefix_;
  EncoderConfig cfg_;
  ParamStore<T>* store_;
};

}  // namespace hicross::encoder
