#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hicross/gui/font.hpp"
#include "hicross/gui/screen.hpp"
#include "hicross/numerics/rng.hpp"

namespace hicross::gui {

/// Binary ink mask of rendered text.
struct InkMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> ink;

  bool at(int x, int y) const { return ink[static_cast<std::size_t>(y * width + x)] != 0; }
};

inline int glyph_width(int glyph_px) { return std::max(3, (glyph_px * 5 + 3) / 7); }
inline int glyph_advance(int glyph_px) { return glyph_width(glyph_px) + std::max(1, glyph_px / 6); }

/// Source cell for output pixel `i` of `n`, mapping both edges onto the
/// first and last of `cells` so thin strokes on the glyph border survive.
inline int cell(int i, int n, int cells) {
  if (n <= 1) return 0;
  return (2 * i * (cells - 1) + (n - 1)) / (2 * (n - 1));
}

/// Nearest-neighbour scaled 5x7 glyphs, one cell per character.
inline InkMask draw_text(const std::string& text, int glyph_px) {
  const auto& font = BitmapFont::instance();
  const int gw = glyph_width(glyph_px), adv = glyph_advance(glyph_px);
  InkMask m;
  m.width = std::max(1, adv * static_cast<int>(text.size()) - (adv - gw));
  m.height = glyph_px;
  m.ink.assign(static_cast<std::size_t>(m.width * m.height), 0);
  for (std::size_t i = 0; i < text.size(); ++i)
    for (int y = 0; y < glyph_px; ++y)
      for (int x = 0; x < gw; ++x)
        if (font.ink(text[i], cell(x, gw, BitmapFont::kCols), cell(y, glyph_px, BitmapFont::kRows)))
          m.ink[static_cast<std::size_t>(y * m.width + static_cast<int>(i) * adv + x)] = 1;
  return m;
}

inline InkMask mirror(const InkMask& m) {
  InkMask out = m;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.ink[static_cast<std::size_t>(y * m.width + x)] = m.at(m.width - 1 - x, y);
  return out;
}

/// Rotation about the mask centre; the result is sized to the rotated bounds.
inline InkMask rotate(const InkMask& m, double degrees) {
  if (degrees == 0.0) return m;
  const double a = degrees * std::numbers::pi / 180.0, c = std::cos(a), s = std::sin(a);
  const double cx = m.width / 2.0, cy = m.height / 2.0;
  const int w = static_cast<int>(std::ceil(std::abs(m.width * c) + std::abs(m.height * s)));
  const int h = static_cast<int>(std::ceil(std::abs(m.width * s) + std::abs(m.height * c)));
  InkMask out;
  out.width = std::max(1, w);
  out.height = std::max(1, h);
  out.ink.assign(static_cast<std::size_t>(out.width * out.height), 0);
  const double ox = out.width / 2.0, oy = out.height / 2.0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double dx = x + 0.5 - ox, dy = y + 0.5 - oy;
      const double sx = c * dx + s * dy + cx, sy = -s * dx + c * dy + cy;
      const int ix = static_cast<int>(std::floor(sx)), iy = static_cast<int>(std::floor(sy));
      if (ix >= 0 && iy >= 0 && ix < m.width && iy < m.height && m.at(ix, iy))
        out.ink[static_cast<std::size_t>(y * out.width + x)] = 1;
    }
  return out;
}

/// Paints ink pixels of `m` with value `fg` at (x0, y0). Single channel.
inline void composite(encoder::ImageGrid& img, const InkMask& m, int x0, int y0, double fg) {
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const int px = x0 + x, py = y0 + y;
      if (m.at(x, y) && px >= 0 && py >= 0 && px < static_cast<int>(img.width) && py < static_cast<int>(img.height))
        img.at(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) = fg;
    }
}

/// 3x3 grayscale erosion (minimum filter).
inline void erode(encoder::ImageGrid& img) {
  const encoder::ImageGrid src = img;
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = src.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < w && ny < h)
            m = std::min(m, src.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny)));
        }
      img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = m;
    }
}

/// Separable Gaussian blur with clamped borders.
inline void gaussian_blur(encoder::ImageGrid& img, double sigma) {
  if (sigma <= 0.0) return;
  const int r = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  encoder::ImageGrid tmp = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * img.at(static_cast<std::size_t>(std::clamp(x + i, 0, w - 1)), static_cast<std::size_t>(y));
      tmp.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * tmp.at(static_cast<std::size_t>(x), static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)));
      img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
}

inline void add_noise(encoder::ImageGrid& img, double stddev, Rng& rng) {
  if (stddev <= 0.0) return;
  for (auto& v : img.pixels) v = std::clamp(v + stddev * rng.normal(), 0.0, 1.0);
}

/// Parameters of a synthetic text-recognition screen.
struct TextRenderSpec {
  int width = 112;
  int height = 112;
  int glyph_px = 6;
  double rotation_deg = 0.0;  // angles drawn uniformly from [-rotation_deg, rotation_deg]
  double noise = 0.0;         // Gaussian noise stddev
  double blur_radius = 0.0;   // Gaussian blur sigma, px
  bool erode = false;
  bool flip = false;          // opt-in aggressive flipping
  int runs = 1;
  int min_chars = 4;
  int max_chars = 8;
  std::string charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  int margin = 2;
  /// When set, the first run starts at (anchor_x, anchor_y) plus a uniform
  /// offset in [0, jitter] on each axis instead of a random position.
  bool fixed_anchor = false;
  int anchor_x = 2;
  int anchor_y = 50;
  int jitter = 0;

  void validate() const {
    if (glyph_px < 3) throw std::invalid_argument("glyph size must be at least 3 px");
    if (width <= 0 || height <= 0) throw std::invalid_argument("screen size must be positive");
    if (rotation_deg < 0.0 || rotation_deg > 90.0) throw std::invalid_argument("rotation must lie in [0, 90] degrees");
    if (noise < 0.0 || noise > 1.0) throw std::invalid_argument("noise must lie in [0, 1]");
    if (blur_radius < 0.0 || blur_radius > 10.0) throw std::invalid_argument("blur radius must lie in [0, 10]");
    if (runs < 1 || min_chars < 1 || max_chars < min_chars) throw std::invalid_argument("bad run/char counts");
    if (charset.empty()) throw std::invalid_argument("empty charset");
  }
};

/// Colours and placement of one rendered run, enough to recompose a screen.
struct RunPlacement {
  InkMask mask;
  int x = 0;
  int y = 0;
};

struct OcrRender {
  SyntheticScreen screen;
  double background = 1.0;
  double foreground = 0.0;
  std::vector<RunPlacement> placements;
};

/// Renders text runs onto a flat background, then applies erosion, blur and
/// noise. Runs are placed without overlap; a run that cannot be placed is
/// skipped and noted in the screen log.
inline OcrRender render_ocr_detailed(const TextRenderSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, "ocr-screen");
  OcrRender out;
  const bool dark_text = rng.uniform() < 0.8;
  const double light = rng.uniform(0.7, 1.0), dark = rng.uniform(0.0, 0.3);
  out.background = dark_text ? light : dark;
  out.foreground = dark_text ? dark : light;
  auto& screen = out.screen;
  screen.seed = seed;
  screen.image = encoder::ImageGrid(static_cast<std::size_t>(spec.width), static_cast<std::size_t>(spec.height), 1,
                                    out.background);
  for (int r = 0; r < spec.runs; ++r) {
    const auto len = static_cast<int>(rng.uniform_int(spec.min_chars, spec.max_chars));
    std::string text;
    for (int i = 0; i < len; ++i)
      text += spec.charset[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.charset.size()) - 1))];
    InkMask m = draw_text(text, spec.glyph_px);
    if (spec.flip && rng.bernoulli(0.5)) m = mirror(m);
    if (spec.rotation_deg > 0.0) m = rotate(m, rng.uniform(-spec.rotation_deg, spec.rotation_deg));
    const int max_x = spec.width - spec.margin - m.width, max_y = spec.height - spec.margin - m.height;
    bool placed = false;
    if (max_x >= spec.margin && max_y >= spec.margin) {
      for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
        int x = static_cast<int>(rng.uniform_int(spec.margin, max_x));
        int y = static_cast<int>(rng.uniform_int(spec.margin, max_y));
        if (spec.fixed_anchor && r == 0) {
          x = std::min(max_x, spec.anchor_x + static_cast<int>(rng.uniform_int(0, spec.jitter)));
          y = std::min(max_y, spec.anchor_y + static_cast<int>(rng.uniform_int(0, spec.jitter)));
        }
        const PixelBox box{x, y, x + m.width, y + m.height};
        const PixelBox padded{box.left - 1, box.top - 1, box.right + 1, box.bottom + 1};
        if (std::any_of(screen.elements.begin(), screen.elements.end(),
                        [&](const ScreenElement& e) { return e.box.intersects(padded); }))
          continue;
        composite(screen.image, m, x, y, out.foreground);
        screen.elements.push_back(ScreenElement{"text", {}, text, box});
        out.placements.push_back(RunPlacement{m, x, y});
        placed = true;
      }
    }
    if (!placed) screen.log.push_back("skipped run '" + text + "': no room on " + std::to_string(spec.width) + "x" +
                                      std::to_string(spec.height) + " screen");
  }
  if (spec.erode) erode(screen.image);
  gaussian_blur(screen.image, spec.blur_radius);
  add_noise(screen.image, spec.noise, rng);
  return out;
}

inline SyntheticScreen render_ocr_screen(const TextRenderSpec& spec, std::uint64_t seed) {
  return render_ocr_detailed(spec, seed).screen;
}

/// Runs in reading order (top to bottom, then left to right), space separated.
inline std::string ocr_transcript(const SyntheticScreen& s) {
  std::vector<const ScreenElement*> els;
  for (const auto& e : s.elements) els.push_back(&e);
  std::stable_sort(els.begin(), els.end(), [](const ScreenElement* a, const ScreenElement* b) {
    return a->box.top != b->box.top ? a->box.top < b->box.top : a->box.left < b->box.left;
  });
  std::string out;
  for (const auto* e : els) out += (out.empty() ? "" : " ") + e->text;
  return out;
}

}  // namespace hicross::gui
