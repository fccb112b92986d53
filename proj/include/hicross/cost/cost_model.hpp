#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hicross/cost/attention_cost.hpp"
#include "hicross/decoder/config.hpp"

namespace hicross::cost {

enum class Norm { layer, rms };    // layer: gain and bias; rms: gain only
enum class Ffn { gelu, swiglu };   // gelu: two matrices; swiglu: three

struct EncoderSpec {
  std::uint64_t side = 224;
  std::uint64_t patch = 14;
  std::uint64_t channels = 3;
  std::uint64_t layers = 0;
  std::uint64_t hidden = 0;
  std::uint64_t heads = 1;
  std::uint64_t mlp = 0;

  std::uint64_t tokens_at(std::uint64_t s) const { return (s / patch) * (s / patch); }
};

struct DecoderSpec {
  std::uint64_t layers = 32;
  std::uint64_t hidden = 4096;
  std::uint64_t heads = 32;
  std::uint64_t ffn_hidden = 11008;
  std::uint64_t vocab = 32000;
  std::uint64_t pos_rows = 0;  // learned position table rows; 0 = none
  Norm norm = Norm::rms;
  Ffn ffn = Ffn::swiglu;
  bool ffn_bias = false;
};

struct CrossSpec {
  std::uint64_t hidden = 1024;
  std::uint64_t heads = 32;
  std::uint64_t high_dim = 1024;
};

struct AdapterSpec {
  bool bias = true;
  std::uint64_t swiglu_hidden = 0;  // 0 = single linear map
};

/// Architecture description shared by the FLOPs and parameter estimators.
struct ModelSpec {
  EncoderSpec low;
  EncoderSpec high;
  DecoderSpec dec;
  CrossSpec cross;
  AdapterSpec adapter;

  /// Vicuna-7B decoder with QKV+FFN visual expert, EVA2-CLIP-E at 224 for
  /// the low branch, EVA2-CLIP-L at 1120 for the high branch, cross width
  /// 1024 with 32 heads.
  static ModelSpec full_scale() {
    ModelSpec s;
    s.low = {224, 14, 3, 64, 1792, 16, 15360};
    s.high = {1120, 14, 3, 24, 1024, 16, 4096};
    s.dec = {};
    s.cross = {};
    s.adapter = {true, 11008};
    return s;
  }

  /// The desk model built by decoder::Model for `cfg`. Counts match its
  /// parameter store exactly.
  static ModelSpec from_config(const decoder::ModelConfig& cfg) {
    ModelSpec s;
    auto enc = [](const encoder::EncoderConfig& e) {
      return EncoderSpec{e.side, e.patch, e.channels, e.layers, e.hidden, e.heads, e.hidden * e.mlp_ratio};
    };
    s.low = enc(cfg.low);
    s.high = enc(cfg.high);
    const auto& d = cfg.decoder;
    s.dec = {d.layers, d.hidden, d.heads, d.hidden * d.ffn_mult, d.vocab, d.max_text, Norm::layer, Ffn::gelu, true};
    s.cross = {d.cross_hidden, d.cross_heads, d.high_dim};
    s.adapter = {true, 0};
    return s;
  }
};

// ---------------------------------------------------------------------------
// Parameters

struct ParamReport {
  std::uint64_t base = 0;
  std::uint64_t visual_expert = 0;
  std::uint64_t cross_module = 0;
  std::uint64_t low_encoder = 0;   // part of base
  std::uint64_t high_encoder = 0;  // part of cross_module
  std::uint64_t cross_layers = 0;  // part of cross_module

  std::uint64_t total() const { return base + visual_expert + cross_module; }
  /// Phase 1 trains the cross module only; phase 2 adds the visual expert.
  std::uint64_t phase1_trainable() const { return cross_module; }
  std::uint64_t phase2_trainable() const { return cross_module + visual_expert; }
  double phase1_fraction() const { return static_cast<double>(phase1_trainable()) / static_cast<double>(total()); }
  double phase2_fraction() const { return static_cast<double>(phase2_trainable()) / static_cast<double>(total()); }
};

inline std::uint64_t encoder_params(const EncoderSpec& e) {
  const std::uint64_t h = e.hidden, m = e.mlp;
  std::uint64_t n = e.patch * e.patch * e.channels * h + h + e.tokens_at(e.side) * h;
  n += e.layers * (2 * h + 3 * h * h + 3 * h + h * h + h + 2 * h + h * m + m + m * h + h);
  if (e.layers > 0) n += 2 * h;
  return n;
}

inline std::uint64_t norm_params(Norm n, std::uint64_t d) { return n == Norm::layer ? 2 * d : d; }

inline std::uint64_t ffn_params(const DecoderSpec& d) {
  const std::uint64_t D = d.hidden, F = d.ffn_hidden;
  std::uint64_t n = (d.ffn == Ffn::swiglu ? 3 : 2) * D * F;
  if (d.ffn_bias) n += (d.ffn == Ffn::swiglu ? 2 * F : F) + D;
  return n;
}

/// Closed-form count per weight matrix. With use_cross off the high encoder
/// and cross layers are absent.
inline ParamReport param_count(const ModelSpec& s, bool use_cross = true) {
  const auto& d = s.dec;
  const std::uint64_t D = d.hidden;
  ParamReport r;
  r.low_encoder = encoder_params(s.low);
  std::uint64_t adapter = s.low.hidden * D + (s.adapter.bias ? D : 0);
  if (s.adapter.swiglu_hidden > 0) adapter += 3 * D * s.adapter.swiglu_hidden;
  std::uint64_t per_layer_base = 2 * norm_params(d.norm, D) + 3 * D * D + D * D + ffn_params(d);
  r.base = r.low_encoder + adapter + d.vocab * D + d.pos_rows * D + d.layers * per_layer_base +
           norm_params(d.norm, D) + D * d.vocab;
  r.visual_expert = d.layers * (3 * D * D + ffn_params(d));
  if (use_cross) {
    r.high_encoder = encoder_params(s.high);
    const std::uint64_t Dc = s.cross.hidden;
    r.cross_layers = d.layers * (norm_params(d.norm, D) + D * Dc + 2 * s.cross.high_dim * Dc + Dc * D);
    r.cross_module = r.high_encoder + r.cross_layers;
  }
  return r;
}

// ---------------------------------------------------------------------------
// FLOPs

/// Accounting switches. Matrix products count 2 FLOPs per multiply-add and
/// softmax 5 FLOPs per element; norms, activations and bias adds are not
/// counted. Encoder attention-score FLOPs (QK^T, softmax, AV inside the
/// vision encoders) are excluded by default; decoder and cross attention
/// are always counted.
struct FlopConvention {
  bool encoder_attention_scores = false;
  bool logits = true;
};

struct FlopLine {
  std::string item;
  double flops = 0;
};

struct FlopReport {
  std::vector<FlopLine> sheet;
  double total = 0;

  double tflops() const { return total / 1e12; }

  double sum(const std::string& prefix) const {
    double t = 0;
    for (const auto& l : sheet)
      if (l.item.compare(0, prefix.size(), prefix) == 0) t += l.flops;
    return t;
  }

  std::string format() const {
    std::ostringstream os;
    os << std::left;
    for (const auto& l : sheet) os << std::setw(28) << l.item << std::scientific << std::setprecision(4) << l.flops << '\n';
    os << std::setw(28) << "total" << total << " (" << std::fixed << std::setprecision(3) << tflops() << " TFLOPs)\n";
    return os.str();
  }
};

namespace detail {

inline void encoder_flops(FlopReport& r, const std::string& tag, const EncoderSpec& e, std::uint64_t side,
                          const FlopConvention& conv) {
  const double L = static_cast<double>(e.tokens_at(side)), h = static_cast<double>(e.hidden),
               m = static_cast<double>(e.mlp), layers = static_cast<double>(e.layers);
  const double pdim = static_cast<double>(e.patch * e.patch * e.channels);
  r.sheet.push_back({tag + ".patch_proj", 2 * L * pdim * h});
  r.sheet.push_back({tag + ".qkv_out_proj", layers * 2 * L * h * 4 * h});
  r.sheet.push_back({tag + ".mlp", layers * 2 * L * h * m * 2});
  if (conv.encoder_attention_scores) {
    const double heads = static_cast<double>(e.heads), dh = h / heads;
    r.sheet.push_back({tag + ".attn_core", layers * heads * L * L * (4 * dh + kSoftmaxFlopsPerElement)});
  }
}

}  // namespace detail

/// Forward FLOPs for one sample. With use_cross the low branch runs at
/// spec.low.side and the high branch at `resolution`; without it the low
/// branch runs at `resolution`. A cross model at resolution 0 has no high
/// tokens and reduces to the base model.
inline FlopReport model_flops(const ModelSpec& s, std::uint64_t resolution, bool use_cross, std::uint64_t text_tokens,
                              const FlopConvention& conv = {}) {
  const auto& patch_of = use_cross ? s.high.patch : s.low.patch;
  if (resolution % patch_of != 0) throw std::invalid_argument("resolution must be divisible by the patch size");
  const std::uint64_t low_side = use_cross ? s.low.side : resolution;
  if (low_side % s.low.patch != 0 || low_side == 0) throw std::invalid_argument("low-resolution side invalid");
  const std::uint64_t lhi = use_cross ? s.high.tokens_at(resolution) : 0;
  const auto& d = s.dec;
  const double D = static_cast<double>(d.hidden), F = static_cast<double>(d.ffn_hidden),
               layers = static_cast<double>(d.layers);
  const double llo = static_cast<double>(s.low.tokens_at(low_side)), lt = static_cast<double>(text_tokens);
  const double S = llo + lt;

  FlopReport r;
  detail::encoder_flops(r, "enc_lo", s.low, low_side, conv);
  double adapter = 2 * llo * static_cast<double>(s.low.hidden) * D;
  if (s.adapter.swiglu_hidden > 0) adapter += 2 * llo * 3 * D * static_cast<double>(s.adapter.swiglu_hidden);
  r.sheet.push_back({"adapter", adapter});
  r.sheet.push_back({"dec.qkv_out_proj", layers * 2 * S * D * 4 * D});
  const AttentionFlops core =
      attention_core_flops(static_cast<std::uint64_t>(llo), lhi, text_tokens, d.heads, d.hidden / d.heads,
                           s.cross.heads, s.cross.hidden / s.cross.heads, d.layers, 1, lhi > 0);
  r.sheet.push_back({"dec.attn_core", static_cast<double>(core.self)});
  r.sheet.push_back({"dec.ffn", layers * 2 * S * D * F * (d.ffn == Ffn::swiglu ? 3 : 2)});
  if (lhi > 0) {
    const double Dc = static_cast<double>(s.cross.hidden), Dhi = static_cast<double>(s.cross.high_dim),
                 L = static_cast<double>(lhi);
    detail::encoder_flops(r, "enc_hi", s.high, resolution, conv);
    r.sheet.push_back({"cross.q_out_proj", layers * 2 * S * D * Dc * 2});
    r.sheet.push_back({"cross.kv_proj", layers * 2 * L * Dhi * Dc * 2});
    r.sheet.push_back({"cross.attn_core", static_cast<double>(core.cross)});
  }
  if (conv.logits) r.sheet.push_back({"logits", 2 * lt * D * static_cast<double>(d.vocab)});
  for (const auto& l : r.sheet) r.total += l.flops;
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps and fits

struct SweepRow {
  std::uint64_t resolution = 0;
  std::uint64_t patches = 0;
  std::uint64_t text_tokens = 0;
  double flops_base = 0;
  double flops_cross = 0;
  double reduction_exact = 0;
  double reduction_lower_bound = 0;
};

/// Per resolution: the base model with all patches in the decoder against
/// the cross model with the same resolution on the high branch. The
/// reduction columns use the normalized attention formulas.
inline std::vector<SweepRow> sweep(const ModelSpec& s, const std::vector<std::uint64_t>& resolutions,
                                   std::uint64_t text_tokens, const FlopConvention& conv = {}) {
  if (resolutions.empty()) throw std::invalid_argument("sweep needs at least one resolution");
  std::vector<SweepRow> rows;
  for (auto res : resolutions) {
    SweepRow row;
    row.resolution = res;
    row.patches = s.high.tokens_at(res);
    row.text_tokens = text_tokens;
    row.flops_base = model_flops(s, res, false, text_tokens, conv).total;
    row.flops_cross = model_flops(s, res, true, text_tokens, conv).total;
    AttnCostInputs c;
    c.low_tokens = static_cast<double>(s.low.tokens_at(s.low.side));
    c.high_tokens = static_cast<double>(row.patches);
    c.text_tokens = static_cast<double>(text_tokens);
    c.cross_heads = static_cast<double>(s.cross.heads);
    c.cross_head_dim = static_cast<double>(s.cross.hidden / s.cross.heads);
    c.dec_heads = static_cast<double>(s.dec.heads);
    c.dec_head_dim = static_cast<double>(s.dec.hidden / s.dec.heads);
    const CostReport rep = reduction_factor(c);
    row.reduction_exact = rep.reduction_factor;
    row.reduction_lower_bound = rep.lower_bound;
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "resolution,patches,L_T,flops_base,flops_cross,reduction_exact,reduction_lower_bound\n";
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.resolution << ',' << r.patches << ',' << r.text_tokens << ',' << r.flops_base << ',' << r.flops_cross
       << ',' << r.reduction_exact << ',' << r.reduction_lower_bound << '\n';
  return os.str();
}

/// Two-series line plot of FLOPs against patch count, log-scaled y axis.
inline std::string sweep_svg(const std::vector<SweepRow>& rows) {
  const double W = 640, H = 400, ml = 70, mr = 20, mt = 20, mb = 50;
  double xmax = 1, ymin = 1e300, ymax = 0;
  for (const auto& r : rows) {
    xmax = std::max(xmax, static_cast<double>(r.patches));
    ymin = std::min({ymin, r.flops_base, r.flops_cross});
    ymax = std::max({ymax, r.flops_base, r.flops_cross});
  }
  const double lo = std::floor(std::log10(ymin)), hi = std::max(lo + 1, std::ceil(std::log10(ymax)));
  auto X = [&](double v) { return ml + (W - ml - mr) * v / xmax; };
  auto Y = [&](double v) { return H - mb - (H - mt - mb) * (std::log10(v) - lo) / (hi - lo); };
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  for (double e = lo; e <= hi; e += 1)
    os << "<text x=\"" << ml - 8 << "\" y=\"" << Y(std::pow(10.0, e)) + 4
       << "\" font-size=\"11\" text-anchor=\"end\">1e" << static_cast<int>(e) << "</text>\n";
  os << "<text x=\"" << (W + ml) / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
     << "image patches</text>\n";
  auto series = [&](auto get, const char* colour, const char* label, double ly) {
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) os << X(static_cast<double>(r.patches)) << ',' << Y(get(r)) << ' ';
    os << "\"/>\n";
    for (const auto& r : rows)
      os << "<circle cx=\"" << X(static_cast<double>(r.patches)) << "\" cy=\"" << Y(get(r)) << "\" r=\"3\" fill=\""
         << colour << "\"/>\n";
    os << "<text x=\"" << ml + 10 << "\" y=\"" << ly << "\" font-size=\"12\" fill=\"" << colour << "\">" << label
       << "</text>\n";
  };
  series([](const SweepRow& r) { return r.flops_base; }, "#c0392b", "all patches in decoder", mt + 14);
  series([](const SweepRow& r) { return r.flops_cross; }, "#2471a3", "high-resolution cross branch", mt + 30);
  os << "</svg>\n";
  return os.str();
}

struct PolyFit {
  std::vector<double> coeffs;  // ascending powers
  double r2 = 0;
};

/// Least-squares polynomial fit with its coefficient of determination.
inline PolyFit fit_polynomial(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("fit_polynomial: bad sample sizes");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd A(n, degree + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k <= degree; ++k) A(i, k) = std::pow(x[static_cast<std::size_t>(i)], k);
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd res = b - A * c;
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  PolyFit f;
  f.coeffs.assign(c.data(), c.data() + c.size());
  f.r2 = ss_tot > 0 ? 1.0 - res.squaredNorm() / ss_tot : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Measured against analytical

struct MeasureRow {
  std::string item;
  double measured = 0;
  double analytical = 0;
  double ratio() const { return analytical > 0 ? measured / analytical : (measured == 0 ? 1.0 : 0.0); }
};

}  // namespace hicross::cost
