#pragma once

#include <map>
#include <string>
#include <vector>

#include "hicross/encoder/image.hpp"

namespace hicross::gui {

/// Pixel rectangle, right/bottom exclusive.
struct PixelBox {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;

  int width() const { return right - left; }
  int height() const { return bottom - top; }
  long area() const { return static_cast<long>(std::max(0, width())) * std::max(0, height()); }
  bool contains(int x, int y) const { return x >= left && x < right && y >= top && y < bottom; }
  bool intersects(const PixelBox& o) const {
    return left < o.right && o.left < right && top < o.bottom && o.top < bottom;
  }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

inline double iou(const PixelBox& a, const PixelBox& b) {
  const int l = std::max(a.left, b.left), t = std::max(a.top, b.top);
  const int r = std::min(a.right, b.right), btm = std::min(a.bottom, b.bottom);
  const long inter = static_cast<long>(std::max(0, r - l)) * std::max(0, btm - t);
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// One visible element. `attributes` are already cleaned.
struct ScreenElement {
  std::string tag;
  std::map<std::string, std::string> attributes;
  std::string text;
  PixelBox box;

  friend bool operator==(const ScreenElement&, const ScreenElement&) = default;
};

struct SyntheticScreen {
  encoder::ImageGrid image;
  std::vector<ScreenElement> elements;
  std::uint64_t seed = 0;
  std::vector<std::string> log;  // skipped elements and similar notes
};

}  // namespace hicross::gui
