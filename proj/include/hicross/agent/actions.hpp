#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace hicross::agent {

/// Trim surrounding whitespace and fold to lower case.
inline std::string normalize_text(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// ---------------------------------------------------------------------------
// Web actions

enum class WebOp { click, type, select };

inline std::string to_string(WebOp op) {
  switch (op) {
    case WebOp::click: return "CLICK";
    case WebOp::type: return "TYPE";
    case WebOp::select: return "SELECT";
  }
  return "?";
}

/// Fractional box of the target element, as in the action serialization.
struct ActionBox {
  double x_left = 0;
  double y_left = 0;
  double width = 0;
  double height = 0;
  friend bool operator==(const ActionBox&, const ActionBox&) = default;
};

struct WebAction {
  std::string tag;         // element role, e.g. button or textbox
  std::string element_id;  // element name or candidate id
  WebOp op = WebOp::click;
  std::string value;       // TYPE and SELECT only
  std::optional<ActionBox> box;

  bool well_formed() const { return !element_id.empty() && (op == WebOp::click || !value.empty()); }
  friend bool operator==(const WebAction&, const WebAction&) = default;
};

class ActionParseError : public std::runtime_error {
 public:
  ActionParseError(const std::string& what, std::size_t pos)
      : std::runtime_error("action grammar: " + what + " at position " + std::to_string(pos)), position(pos) {}
  std::size_t position;
};

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// "[tag] name → OP[: value][ at the box {json}]"
inline std::string format_action(const WebAction& a) {
  std::string s = "[" + a.tag + "] " + a.element_id + " → " + to_string(a.op);
  if (a.op != WebOp::click || !a.value.empty()) s += ": " + a.value;
  if (a.box)
    s += " at the box {\"x_left\": " + format_number(a.box->x_left) + ", \"y_left\": " + format_number(a.box->y_left) +
         ", \"width\": " + format_number(a.box->width) + ", \"height\": " + format_number(a.box->height) + "}";
  return s;
}

/// Accepts "→" or "->" as the arrow.
inline WebAction parse_action(const std::string& text) {
  WebAction a;
  if (text.empty() || text[0] != '[') throw ActionParseError("expected '[' opening the element tag", 0);
  const std::size_t close = text.find(']');
  if (close == std::string::npos) throw ActionParseError("unterminated element tag", text.size());
  a.tag = text.substr(1, close - 1);
  if (a.tag.empty()) throw ActionParseError("empty element tag", 1);
  std::size_t i = close + 1;
  if (i >= text.size() || text[i] != ' ') throw ActionParseError("expected space after element tag", i);
  ++i;
  const std::string arrow_u = " → ", arrow_a = " -> ";
  std::size_t arrow = text.find(arrow_u, i), alen = arrow_u.size();
  const std::size_t arrow2 = text.find(arrow_a, i);
  if (arrow == std::string::npos || (arrow2 != std::string::npos && arrow2 < arrow)) {
    arrow = arrow2;
    alen = arrow_a.size();
  }
  if (arrow == std::string::npos) throw ActionParseError("missing arrow", i);
  a.element_id = text.substr(i, arrow - i);
  if (a.element_id.empty()) throw ActionParseError("empty element name", i);
  i = arrow + alen;

  std::string rest = text.substr(i);
  const std::string box_kw = " at the box ";
  const std::size_t box_at = rest.find(box_kw);
  std::string box_json;
  if (box_at != std::string::npos) {
    box_json = rest.substr(box_at + box_kw.size());
    rest = rest.substr(0, box_at);
  }
  std::string op = rest, value;
  const std::size_t colon = rest.find(':');
  if (colon != std::string::npos) {
    op = rest.substr(0, colon);
    if (colon + 1 >= rest.size() || rest[colon + 1] != ' ') throw ActionParseError("expected ': ' before value", i + colon);
    value = rest.substr(colon + 2);
  }
  if (op == "CLICK") a.op = WebOp::click;
  else if (op == "TYPE") a.op = WebOp::type;
  else if (op == "SELECT") a.op = WebOp::select;
  else throw ActionParseError("unknown operation '" + op + "'", i);
  a.value = value;
  if (a.op != WebOp::click && a.value.empty()) throw ActionParseError(op + " needs a value", i + op.size());

  if (box_at != std::string::npos) {
    const std::size_t pos = i + box_at + box_kw.size();
    try {
      const auto j = nlohmann::json::parse(box_json);
      a.box = ActionBox{j.at("x_left").get<double>(), j.at("y_left").get<double>(), j.at("width").get<double>(),
                        j.at("height").get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw ActionParseError(std::string("bad box: ") + e.what(), pos);
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Phone actions

enum class AitwKind { tap, swipe, type, home, back, enter, complete };
enum class Direction { up, down, left, right };

inline std::string to_string(AitwKind k) {
  switch (k) {
    case AitwKind::tap: return "tap";
    case AitwKind::swipe: return "swipe";
    case AitwKind::type: return "type";
    case AitwKind::home: return "home";
    case AitwKind::back: return "back";
    case AitwKind::enter: return "enter";
    case AitwKind::complete: return "complete";
  }
  return "?";
}

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::up: return "up";
    case Direction::down: return "down";
    case Direction::left: return "left";
    case Direction::right: return "right";
  }
  return "?";
}

struct AitwAction {
  AitwKind kind = AitwKind::home;
  double x = 0;  // tap position, unit square
  double y = 0;
  Direction direction = Direction::up;
  std::string text;

  static AitwAction tap(double x, double y) { return {AitwKind::tap, x, y, Direction::up, ""}; }
  static AitwAction swipe(Direction d) { return {AitwKind::swipe, 0, 0, d, ""}; }
  static AitwAction type(std::string t) { return {AitwKind::type, 0, 0, Direction::up, std::move(t)}; }
  static AitwAction simple(AitwKind k) { return {k, 0, 0, Direction::up, ""}; }
};

inline nlohmann::ordered_json to_json(const AitwAction& a) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(a.kind);
  if (a.kind == AitwKind::tap) {
    j["x"] = a.x;
    j["y"] = a.y;
  } else if (a.kind == AitwKind::swipe) {
    j["direction"] = to_string(a.direction);
  } else if (a.kind == AitwKind::type) {
    j["text"] = a.text;
  }
  return j;
}

inline AitwAction aitw_from_json(const nlohmann::json& j) {
  const std::string k = j.at("kind").get<std::string>();
  if (k == "tap") {
    const double x = j.at("x").get<double>(), y = j.at("y").get<double>();
    if (x < 0 || x > 1 || y < 0 || y > 1) throw std::runtime_error("tap position outside the unit square");
    return AitwAction::tap(x, y);
  }
  if (k == "swipe") {
    const std::string d = j.at("direction").get<std::string>();
    for (auto dir : {Direction::up, Direction::down, Direction::left, Direction::right})
      if (d == to_string(dir)) return AitwAction::swipe(dir);
    throw std::runtime_error("unknown swipe direction '" + d + "'");
  }
  if (k == "type") return AitwAction::type(j.at("text").get<std::string>());
  for (auto kind : {AitwKind::home, AitwKind::back, AitwKind::enter, AitwKind::complete})
    if (k == to_string(kind)) return AitwAction::simple(kind);
  throw std::runtime_error("unknown action kind '" + k + "'");
}

}  // namespace hicross::agent
