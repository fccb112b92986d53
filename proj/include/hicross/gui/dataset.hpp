#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hicross/gui/boxes.hpp"
#include "hicross/gui/page.hpp"
#include "hicross/gui/render.hpp"

namespace hicross::gui {

/// Prompt templates. Bump the version when any template changes.
inline constexpr const char* kTemplateVersion = "v1";
inline const std::string kOcrPrompt = "OCR:";
inline const std::string kRecPrefix = "REC:";
inline const std::string kRegPrefix = "REG:";
inline const std::string kGroundPrefix = "GND:";

struct Sample {
  std::string image_path;
  std::string task;  // ocr, rec or reg
  std::string prompt;
  std::string answer;
  std::uint64_t seed = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct RecSample {
  std::size_t element = 0;
  std::string html;
  BoxCoord box;
  std::string prompt;
  std::string answer;
};

struct RegSample {
  std::size_t element = 0;
  BoxCoord box;
  std::string html;
  std::string prompt;
  std::string answer;
};

inline void require_elements(const SyntheticScreen& s) {
  if (s.elements.empty()) throw std::invalid_argument("screen has no elements");
}

inline std::vector<RecSample> make_rec(const SyntheticScreen& s) {
  require_elements(s);
  const int W = static_cast<int>(s.image.width), H = static_cast<int>(s.image.height);
  std::vector<RecSample> out;
  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    RecSample r;
    r.element = i;
    r.html = to_html(s.elements[i]);
    r.box = normalize_box(s.elements[i].box, W, H);
    r.prompt = kRecPrefix + r.html;
    r.answer = format_boxes(r.box);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RegSample> make_reg(const SyntheticScreen& s) {
  require_elements(s);
  const int W = static_cast<int>(s.image.width), H = static_cast<int>(s.image.height);
  std::vector<RegSample> out;
  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    RegSample r;
    r.element = i;
    r.box = normalize_box(s.elements[i].box, W, H);
    r.html = to_html(s.elements[i]);
    r.prompt = kRegPrefix + format_boxes(r.box);
    r.answer = r.html;
    out.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::ordered_json to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["image_path"] = s.image_path;
  j["task"] = s.task;
  j["prompt"] = s.prompt;
  j["answer"] = s.answer;
  j["seed"] = s.seed;
  return j;
}

inline Sample sample_from_json(const nlohmann::json& j) {
  Sample s;
  s.image_path = j.at("image_path").get<std::string>();
  s.task = j.at("task").get<std::string>();
  if (s.task != "ocr" && s.task != "rec" && s.task != "reg") throw std::runtime_error("unknown task '" + s.task + "'");
  s.prompt = j.at("prompt").get<std::string>();
  s.answer = j.at("answer").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

/// One JSON object per line with a fixed field order.
inline void write_dataset(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open dataset file " + path + " for writing");
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
  if (!os) throw std::runtime_error("write failed for dataset file " + path);
}

inline std::vector<Sample> read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset file " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct GenDataOptions {
  std::string task = "ocr";  // ocr, rec, reg
  std::size_t count = 10;
  std::uint64_t seed = 0;
  int resolution = 0;        // square side; 0 = task default
  std::string out = "data_out";
};

/// Writes `count` screens as PNG under out/images and their samples to
/// out/data.jsonl. REC/REG screens contribute one sample per element.
inline std::vector<Sample> generate_dataset(const GenDataOptions& o) {
  if (o.task != "ocr" && o.task != "rec" && o.task != "reg") throw std::invalid_argument("unknown task '" + o.task + "'");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(o.out) / "images");
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < o.count; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + i;
    const std::string rel = "images/" + o.task + "_" + std::to_string(i) + ".png";
    SyntheticScreen sc;
    if (o.task == "ocr") {
      TextRenderSpec spec;
      if (o.resolution > 0) spec.width = spec.height = o.resolution;
      sc = render_ocr_screen(spec, seed);
      samples.push_back({rel, "ocr", kOcrPrompt, ocr_transcript(sc), seed});
    } else {
      const Resolution res = o.resolution > 0 ? Resolution{o.resolution, o.resolution}
                                              : device_resolutions()[seed % device_resolutions().size()];
      sc = gen_page(seed, res);
      if (o.task == "rec")
        for (const auto& r : make_rec(sc)) samples.push_back({rel, "rec", r.prompt, r.answer, seed});
      else
        for (const auto& r : make_reg(sc)) samples.push_back({rel, "reg", r.prompt, r.answer, seed});
    }
    encoder::write_png(sc.image, (fs::path(o.out) / rel).string());
  }
  write_dataset(samples, (fs::path(o.out) / "data.jsonl").string());
  return samples;
}

}  // namespace hicross::gui
