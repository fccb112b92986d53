#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hicross/agent/actions.hpp"

namespace hicross::agent {

struct MatchConfig {
  double tap_radius = 0.14;  // Euclidean distance in the unit square
  bool normalize = true;     // trim + case-fold typed text

  void validate() const {
    if (!(tap_radius > 0.0 && tap_radius < 1.0)) throw std::invalid_argument("tap radius must lie in (0, 1)");
  }
};

inline bool text_equal(const std::string& a, const std::string& b, bool normalize) {
  return normalize ? normalize_text(a) == normalize_text(b) : a == b;
}

/// Same element, same operation and, for TYPE/SELECT, the same value.
inline bool step_success(const WebAction& pred, const WebAction& gold, const MatchConfig& cfg = {}) {
  if (pred.element_id != gold.element_id || pred.op != gold.op) return false;
  if (gold.op == WebOp::click) return true;
  return text_equal(pred.value, gold.value, cfg.normalize);
}

inline bool aitw_match(const AitwAction& pred, const AitwAction& gold, const MatchConfig& cfg = {}) {
  if (pred.kind != gold.kind) return false;
  switch (gold.kind) {
    case AitwKind::tap: return std::hypot(pred.x - gold.x, pred.y - gold.y) <= cfg.tap_radius;
    case AitwKind::swipe: return pred.direction == gold.direction;
    case AitwKind::type: return text_equal(pred.text, gold.text, cfg.normalize);
    default: return true;
  }
}

/// One evaluated step. A missing prediction (empty or unparsable) fails.
template <class Action>
struct EpisodeStep {
  std::string task;
  std::vector<std::string> history;
  Action gold;
  std::optional<Action> pred;
  std::string subset;
};

using WebStep = EpisodeStep<WebAction>;
using AitwStep = EpisodeStep<AitwAction>;

struct SubsetScore {
  std::size_t steps = 0;
  std::size_t successes = 0;
  double rate() const { return steps ? static_cast<double>(successes) / static_cast<double>(steps) : 0.0; }
};

struct ScoreReport {
  SubsetScore overall;
  std::map<std::string, SubsetScore> subsets;

  double rate() const { return overall.rate(); }

  std::string csv() const {
    std::ostringstream os;
    os << "subset,steps,successes,rate\n";
    for (const auto& [name, s] : subsets) os << name << ',' << s.steps << ',' << s.successes << ',' << s.rate() << '\n';
    os << "overall," << overall.steps << ',' << overall.successes << ',' << overall.rate() << '\n';
    return os.str();
  }
};

template <class Step, class Match>
ScoreReport score_steps(const std::vector<Step>& steps, Match&& match) {
  if (steps.empty()) throw std::invalid_argument("cannot score an empty episode set");
  ScoreReport r;
  for (const auto& s : steps) {
    const bool ok = s.pred.has_value() && match(*s.pred, s.gold);
    for (SubsetScore* t : {&r.overall, &r.subsets[s.subset]}) {
      ++t->steps;
      t->successes += ok ? 1 : 0;
    }
  }
  return r;
}

/// Mind2Web step success rate.
inline ScoreReport step_sr(const std::vector<WebStep>& steps, const MatchConfig& cfg = {}) {
  return score_steps(steps, [&](const WebAction& p, const WebAction& g) { return step_success(p, g, cfg); });
}

/// AITW matching score: mean per-step action match.
inline ScoreReport matching_score(const std::vector<AitwStep>& steps, const MatchConfig& cfg = {}) {
  cfg.validate();
  return score_steps(steps, [&](const AitwAction& p, const AitwAction& g) { return aitw_match(p, g, cfg); });
}

namespace detail {

template <class Step, class Gold, class Pred>
std::vector<Step> load_steps(const std::string& path, Gold&& gold, Pred&& pred) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open episode file " + path);
  std::vector<Step> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Step s;
      s.task = j.value("task", "");
      if (j.contains("history")) s.history = j.at("history").get<std::vector<std::string>>();
      s.subset = j.value("subset", "all");
      s.gold = gold(j.at("gold"));
      if (j.contains("pred") && !j.at("pred").is_null()) s.pred = pred(j.at("pred"));
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detail

/// JSONL, one step per line: {task, history[], gold, pred, subset}. Web
/// actions are strings in the action grammar; an empty or unparsable
/// prediction is kept as a failed step.
inline std::vector<WebStep> load_web_steps(const std::string& path) {
  return detail::load_steps<WebStep>(
      path, [](const nlohmann::json& j) { return parse_action(j.get<std::string>()); },
      [](const nlohmann::json& j) -> std::optional<WebAction> {
        const auto s = j.get<std::string>();
        if (s.empty()) return std::nullopt;
        try {
          return parse_action(s);
        } catch (const ActionParseError&) {
          return std::nullopt;
        }
      });
}

/// Phone actions are JSON objects, e.g. {"kind": "tap", "x": 0.5, "y": 0.5}.
inline std::vector<AitwStep> load_aitw_steps(const std::string& path) {
  return detail::load_steps<AitwStep>(
      path, [](const nlohmann::json& j) { return aitw_from_json(j); },
      [](const nlohmann::json& j) -> std::optional<AitwAction> {
        try {
          return aitw_from_json(j);
        } catch (const std::exception&) {
          return std::nullopt;
        }
      });
}

}  // namespace hicross::agent
