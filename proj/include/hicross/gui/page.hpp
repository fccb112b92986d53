#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hicross/gui/render.hpp"
#include "hicross/gui/screen.hpp"
#include "hicross/numerics/rng.hpp"

namespace hicross::gui {

struct Resolution {
  int width = 0;
  int height = 0;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

inline const std::vector<Resolution>& device_resolutions() {
  static const std::vector<Resolution> list{{1120, 1120}, {1280, 720}, {750, 1334}, {448, 448}};
  return list;
}

/// Attributes kept after cleaning; everything else (style, class, id,
/// event handlers, data-*) is dropped.
inline const std::set<std::string>& attribute_whitelist() {
  static const std::set<std::string> keep{"alt", "aria-label", "href", "name", "placeholder", "title", "type", "value"};
  return keep;
}

inline std::map<std::string, std::string> clean_attributes(const std::map<std::string, std::string>& raw) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : raw)
    if (attribute_whitelist().count(k)) out[k] = v;
  return out;
}

inline bool is_void_tag(const std::string& tag) { return tag == "input" || tag == "img"; }

inline std::string escape_html(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string unescape_html(const std::string& s) {
  static const std::vector<std::pair<std::string, char>> ents{{"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool hit = false;
    if (s[i] == '&')
      for (const auto& [e, c] : ents)
        if (s.compare(i, e.size(), e) == 0) {
          out += c;
          i += e.size();
          hit = true;
          break;
        }
    if (!hit) out += s[i++];
  }
  return out;
}

/// <tag k="v" ...>text</tag>, attributes in key order; void tags carry no text.
inline std::string to_html(const ScreenElement& e) {
  std::string out = "<" + e.tag;
  for (const auto& [k, v] : e.attributes) out += " " + k + "=\"" + escape_html(v) + "\"";
  out += ">";
  if (!is_void_tag(e.tag)) out += escape_html(e.text) + "</" + e.tag + ">";
  return out;
}

class HtmlParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the single-element form written by to_html. The box is left empty.
inline ScreenElement parse_html(const std::string& html) {
  ScreenElement e;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) { throw HtmlParseError("html: " + why + " in '" + html + "'"); };
  auto name = [&] {
    const std::size_t s = i;
    while (i < html.size() && (std::isalnum(static_cast<unsigned char>(html[i])) || html[i] == '-')) ++i;
    if (i == s) fail("expected a name");
    return html.substr(s, i - s);
  };
  if (html.empty() || html[i++] != '<') fail("expected '<'");
  e.tag = name();
  while (i < html.size() && html[i] == ' ') {
    ++i;
    const std::string k = name();
    if (html.compare(i, 2, "=\"") != 0) fail("expected '=\"'");
    i += 2;
    const std::size_t end = html.find('"', i);
    if (end == std::string::npos) fail("unterminated attribute");
    e.attributes[k] = unescape_html(html.substr(i, end - i));
    i = end + 1;
  }
  if (i >= html.size() || html[i++] != '>') fail("expected '>'");
  if (is_void_tag(e.tag)) {
    if (i != html.size()) fail("trailing text after void element");
    return e;
  }
  const std::string close = "</" + e.tag + ">";
  if (html.size() < i + close.size() || html.compare(html.size() - close.size(), close.size(), close) != 0)
    fail("missing " + close);
  e.text = unescape_html(html.substr(i, html.size() - close.size() - i));
  return e;
}

struct PageSpec {
  int min_elements = 3;
  int max_elements = 8;
  int glyph_px = 0;  // 0 = derived from the resolution
  int max_words = 3;
};

/// Procedural page: links, buttons, inputs, paragraphs and images laid out
/// in rows without overlap on a light background. Elements that do not fit
/// are skipped and logged.
inline SyntheticScreen gen_page(std::uint64_t seed, Resolution res, const PageSpec& spec = {}) {
  if (res.width <= 0 || res.height <= 0) throw std::invalid_argument("gen_page: bad resolution");
  if (spec.min_elements < 1 || spec.max_elements < spec.min_elements)
    throw std::invalid_argument("gen_page: bad element count range");
  static const std::vector<std::string> words{"home", "search", "login", "cart", "news", "about", "help", "menu",
                                              "next", "back", "save", "share", "sign", "up", "more", "price",
                                              "deals", "email", "open", "close", "music", "maps", "video", "shop"};
  static const std::vector<std::string> tags{"a", "button", "input", "p", "img"};
  Rng rng(seed, "gui-page");
  SyntheticScreen sc;
  sc.seed = seed;
  sc.image = encoder::ImageGrid(static_cast<std::size_t>(res.width), static_cast<std::size_t>(res.height), 1, 0.96);
  const int gpx = spec.glyph_px > 0 ? spec.glyph_px : std::max(6, std::min(res.width, res.height) / 40);
  const int pad = std::max(2, gpx / 2), gap = gpx;
  auto phrase = [&](int max_words) {
    std::string s;
    const auto n = rng.uniform_int(1, max_words);
    for (std::int64_t i = 0; i < n; ++i)
      s += (i ? " " : "") + words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(words.size()) - 1))];
    return s;
  };
  auto fill = [&](const PixelBox& b, double v) {
    for (int y = b.top; y < b.bottom; ++y)
      for (int x = b.left; x < b.right; ++x) sc.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = v;
  };
  auto frame = [&](const PixelBox& b, double v) {
    for (int x = b.left; x < b.right; ++x) {
      sc.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(b.top)) = v;
      sc.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(b.bottom - 1)) = v;
    }
    for (int y = b.top; y < b.bottom; ++y) {
      sc.image.at(static_cast<std::size_t>(b.left), static_cast<std::size_t>(y)) = v;
      sc.image.at(static_cast<std::size_t>(b.right - 1), static_cast<std::size_t>(y)) = v;
    }
  };

  const auto count = static_cast<int>(rng.uniform_int(spec.min_elements, spec.max_elements));
  int x = gap, y = gap, row_h = 0;
  for (int n = 0; n < count; ++n) {
    ScreenElement e;
    e.tag = tags[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tags.size()) - 1))];
    std::map<std::string, std::string> raw{{"class", "c" + std::to_string(rng.uniform_int(0, 99))},
                                           {"id", "e" + std::to_string(n)},
                                           {"style", "margin:" + std::to_string(rng.uniform_int(0, 9)) + "px"}};
    std::string label = phrase(spec.max_words);
    if (e.tag == "a") {
      raw["href"] = "/" + label.substr(0, label.find(' '));
      raw["onclick"] = "go()";
      e.text = label;
    } else if (e.tag == "button") {
      raw["type"] = "submit";
      e.text = label;
    } else if (e.tag == "input") {
      raw["type"] = "text";
      raw["placeholder"] = label;
      raw["name"] = "f" + std::to_string(n);
    } else if (e.tag == "p") {
      e.text = phrase(spec.max_words + 2);
      raw["data-id"] = std::to_string(rng.uniform_int(0, 999));
    } else {
      raw["alt"] = label;
      raw["src"] = "i" + std::to_string(n) + ".png";
    }
    e.attributes = clean_attributes(raw);
    const std::string shown = e.tag == "input" ? raw["placeholder"] : e.text;
    InkMask m = draw_text(shown.empty() ? " " : shown, gpx);
    int w = m.width + 2 * pad, h = m.height + 2 * pad;
    if (e.tag == "img") w = h = 4 * gpx;
    if (e.tag == "input") w = std::max(w, 12 * glyph_advance(gpx));
    if (x + w + gap > res.width) {
      x = gap;
      y += row_h + gap;
      row_h = 0;
    }
    if (w + 2 * gap > res.width || y + h + gap > res.height) {
      sc.log.push_back("skipped " + e.tag + " element: no room on " + std::to_string(res.width) + "x" +
                       std::to_string(res.height) + " page");
      continue;
    }
    e.box = {x, y, x + w, y + h};
    switch (e.tag[0]) {
      case 'b':
        fill(e.box, 0.75);
        frame(e.box, 0.2);
        composite(sc.image, m, x + pad, y + pad, 0.05);
        break;
      case 'i':
        if (e.tag == "img") {
          fill(e.box, 0.5);
          for (int k = 0; k < w; ++k) {
            sc.image.at(static_cast<std::size_t>(x + k), static_cast<std::size_t>(y + k * (h - 1) / std::max(1, w - 1))) = 0.1;
            sc.image.at(static_cast<std::size_t>(x + k), static_cast<std::size_t>(y + h - 1 - k * (h - 1) / std::max(1, w - 1))) = 0.1;
          }
        } else {
          fill(e.box, 1.0);
          frame(e.box, 0.3);
          composite(sc.image, m, x + pad, y + pad, 0.55);
        }
        break;
      case 'a':
        composite(sc.image, m, x + pad, y + pad, 0.25);
        for (int k = 0; k < m.width; ++k)
          sc.image.at(static_cast<std::size_t>(x + pad + k), static_cast<std::size_t>(y + h - 1)) = 0.25;
        break;
      default:
        composite(sc.image, m, x + pad, y + pad, 0.0);
    }
    sc.elements.push_back(std::move(e));
    x += w + gap + static_cast<int>(rng.uniform_int(0, gap));
    row_h = std::max(row_h, h);
  }
  return sc;
}

inline SyntheticScreen gen_page(std::uint64_t seed, std::uint64_t device_index, const PageSpec& spec = {}) {
  const auto& devs = device_resolutions();
  if (device_index >= devs.size()) throw std::invalid_argument("gen_page: device index out of range");
  return gen_page(seed, devs[device_index], spec);
}

}  // namespace hicross::gui
