#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "hicross/gui/screen.hpp"

namespace hicross::gui {

/// Box corners quantized to [0, 999] in each axis.
struct BoxCoord {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  friend bool operator==(const BoxCoord&, const BoxCoord&) = default;
};

inline int quantize(int c, int extent) {
  const long q = static_cast<long>(c) * 1000 / extent;
  return static_cast<int>(std::min<long>(q, 999));
}

/// floor(c * 1000 / E) per coordinate, clamped to 999.
inline BoxCoord normalize_box(const PixelBox& b, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("normalize_box: non-positive extent");
  if (b.left > b.right || b.top > b.bottom) throw std::invalid_argument("normalize_box: inverted box");
  if (b.left < 0 || b.top < 0 || b.right > width || b.bottom > height)
    throw std::invalid_argument("normalize_box: box outside the image");
  return {quantize(b.left, width), quantize(b.top, height), quantize(b.right, width), quantize(b.bottom, height)};
}

/// Smallest pixel coordinate inside each bucket, so that
/// 0 <= c - denormalize(normalize(c)) < E / 1000 away from the clamp.
inline PixelBox denormalize_box(const BoxCoord& b, int width, int height) {
  auto d = [](int q, int e) { return static_cast<int>((static_cast<long>(q) * e + 999) / 1000); };
  return {d(b.x0, width), d(b.y0, height), d(b.x1, width), d(b.y1, height)};
}

inline std::string format_box(const BoxCoord& b) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d,%03d,%03d,%03d", b.x0, b.y0, b.x1, b.y1);
  return buf;
}

/// "[[x0,y0,x1,y1;x0,y0,x1,y1]]" per group; groups are separated by a space.
inline std::string format_boxes(const std::vector<std::vector<BoxCoord>>& groups) {
  if (groups.empty()) throw std::invalid_argument("format_boxes: no groups");
  std::string out;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("format_boxes: empty group");
    if (!out.empty()) out += ' ';
    out += "[[";
    for (std::size_t i = 0; i < g.size(); ++i) out += (i ? ";" : "") + format_box(g[i]);
    out += "]]";
  }
  return out;
}

inline std::string format_boxes(const BoxCoord& b) { return format_boxes({{b}}); }

class BoxParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverse of format_boxes. Text between groups other than spaces is an error.
inline std::vector<std::vector<BoxCoord>> parse_boxes(const std::string& s) {
  std::vector<std::vector<BoxCoord>> groups;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) { throw BoxParseError("box grammar: " + why + " at offset " + std::to_string(i)); };
  auto expect = [&](char c) {
    if (i >= s.size() || s[i] != c) fail(std::string("expected '") + c + "'");
    ++i;
  };
  auto number = [&] {
    int v = 0;
    for (int k = 0; k < 3; ++k) {
      if (i >= s.size() || s[i] < '0' || s[i] > '9') fail("expected three digits");
      v = v * 10 + (s[i++] - '0');
    }
    return v;
  };
  while (i < s.size()) {
    if (s[i] == ' ') {
      ++i;
      continue;
    }
    expect('[');
    expect('[');
    std::vector<BoxCoord> g;
    while (true) {
      BoxCoord b;
      b.x0 = number();
      expect(',');
      b.y0 = number();
      expect(',');
      b.x1 = number();
      expect(',');
      b.y1 = number();
      g.push_back(b);
      if (i < s.size() && s[i] == ';') {
        ++i;
        continue;
      }
      break;
    }
    expect(']');
    expect(']');
    groups.push_back(std::move(g));
  }
  if (groups.empty()) fail("no box group");
  return groups;
}

}  // namespace hicross::gui
