#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hicross::harness {

/// Character-level vocabulary: four specials followed by printable ASCII.
/// Characters outside the table map to '?'.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  Vocab() {
    symbols_ = {"<pad>", "<bos>", "<eos>", "<sep>"};
    for (int c = 32; c < 127; ++c) symbols_.push_back(std::string(1, static_cast<char>(c)));
    rebuild();
  }

  /// One symbol per line; the first four lines must be the specials.
  static Vocab from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open vocabulary file " + path);
    Vocab v;
    v.symbols_.clear();
    std::string line;
    while (std::getline(is, line)) v.symbols_.push_back(line == "<space>" ? " " : line);
    if (v.symbols_.size() < 5 || v.symbols_[0] != "<pad>" || v.symbols_[1] != "<bos>" || v.symbols_[2] != "<eos>" ||
        v.symbols_[3] != "<sep>")
      throw std::runtime_error(path + ": vocabulary must start with <pad>, <bos>, <eos>, <sep>");
    v.rebuild();
    return v;
  }

  std::size_t size() const { return symbols_.size(); }

  int id(char c) const {
    auto it = ids_.find(c);
    if (it != ids_.end()) return it->second;
    auto q = ids_.find('?');
    return q == ids_.end() ? kPad : q->second;
  }

  std::vector<int> encode(const std::string& s) const {
    std::vector<int> out;
    out.reserve(s.size());
    for (char c : s) out.push_back(id(c));
    return out;
  }

  /// Specials are dropped; decoding stops at <eos>.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
      if (i == kEos) break;
      if (i < 4 || static_cast<std::size_t>(i) >= symbols_.size()) continue;
      out += symbols_[static_cast<std::size_t>(i)];
    }
    return out;
  }

 private:
  void rebuild() {
    ids_.clear();
    for (std::size_t i = 4; i < symbols_.size(); ++i)
      if (symbols_[i].size() == 1) ids_[symbols_[i][0]] = static_cast<int>(i);
  }

  std::vector<std::string> symbols_;
  std::unordered_map<char, int> ids_;
};

}  // namespace hicross::harness
