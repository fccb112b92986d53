#pragma once

#include <map>
#include <sstream>
#include <string>

#include "hicross/encoder/encoder.hpp"

namespace hicross::decoder {

/// Decoder geometry. Head widths are hidden/heads and cross_hidden/cross_heads.
struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t hidden = 48;        // decoder width
  std::size_t heads = 4;
  std::size_t cross_hidden = 32;  // width of the cross-attention projections
  std::size_t cross_heads = 4;
  std::size_t high_dim = 32;      // width of the high-resolution token features
  std::size_t vocab = 100;
  std::size_t max_text = 64;
  std::size_t ffn_mult = 4;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t cross_head_dim() const { return cross_hidden / cross_heads; }

  void validate() const {
    if (heads == 0 || hidden % heads != 0)
      throw DimensionError("decoder hidden " + std::to_string(hidden) + " not divisible by heads " +
                           std::to_string(heads));
    if (cross_heads == 0 || cross_hidden % cross_heads != 0)
      throw DimensionError("cross hidden " + std::to_string(cross_hidden) + " not divisible by cross heads " +
                           std::to_string(cross_heads));
    if (vocab == 0 || max_text == 0) throw DimensionError("decoder vocab and max_text must be positive");
  }
};

/// Complete architecture: both image branches plus the decoder. With
/// use_cross off the high-resolution branch and all cross weights are absent.
struct ModelConfig {
  encoder::EncoderConfig low{28, 14, 1, 1, 32, 4, 4};
  encoder::EncoderConfig high{112, 14, 1, 1, 32, 4, 4};
  DecoderConfig decoder;
  bool use_cross = true;
  std::uint64_t seed = 0;

  void validate() const {
    low.validate();
    decoder.validate();
    if (use_cross) {
      high.validate();
      if (high.hidden != decoder.high_dim)
        throw DimensionError("high encoder hidden " + std::to_string(high.hidden) +
                             " must equal decoder high_dim " + std::to_string(decoder.high_dim));
    }
  }

  std::string to_kv() const {
    std::ostringstream os;
    auto enc = [&](const std::string& p, const encoder::EncoderConfig& e) {
      os << p << ".side=" << e.side << '\n' << p << ".patch=" << e.patch << '\n' << p << ".channels=" << e.channels
         << '\n' << p << ".layers=" << e.layers << '\n' << p << ".hidden=" << e.hidden << '\n' << p
         << ".heads=" << e.heads << '\n' << p << ".mlp_ratio=" << e.mlp_ratio << '\n';
    };
    enc("low", low);
    enc("high", high);
    const auto& d = decoder;
    os << "dec.layers=" << d.layers << "\ndec.hidden=" << d.hidden << "\ndec.heads=" << d.heads
       << "\ndec.cross_hidden=" << d.cross_hidden << "\ndec.cross_heads=" << d.cross_heads
       << "\ndec.high_dim=" << d.high_dim << "\ndec.vocab=" << d.vocab << "\ndec.max_text=" << d.max_text
       << "\ndec.ffn_mult=" << d.ffn_mult << "\nuse_cross=" << (use_cross ? 1 : 0) << "\nseed=" << seed << '\n';
    return os.str();
  }

  static ModelConfig from_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> std::uint64_t {
      auto it = kv.find(k);
      if (it == kv.end()) throw std::runtime_error("model config missing key " + k);
      return std::stoull(it->second);
    };
    ModelConfig c;
    auto enc = [&](const std::string& p, encoder::EncoderConfig& e) {
      e.side = get(p + ".side");
      e.patch = get(p + ".patch");
      e.channels = get(p + ".channels");
      e.layers = get(p + ".layers");
      e.hidden = get(p + ".hidden");
      e.heads = get(p + ".heads");
      e.mlp_ratio = get(p + ".mlp_ratio");
    };
    enc("low", c.low);
    enc("high", c.high);
    auto& d = c.decoder;
    d.layers = get("dec.layers");
    d.hidden = get("dec.hidden");
    d.heads = get("dec.heads");
    d.cross_hidden = get("dec.cross_hidden");
    d.cross_heads = get("dec.cross_heads");
    d.high_dim = get("dec.high_dim");
    d.vocab = get("dec.vocab");
    d.max_text = get("dec.max_text");
    d.ffn_mult = get("dec.ffn_mult");
    c.use_cross = get("use_cross") != 0;
    c.seed = get("seed");
    return c;
  }
};

}  // namespace hicross::decoder
