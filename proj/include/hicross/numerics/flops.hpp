#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace hicross {

/// Per-category floating point operation counter fed by the kernels.
/// One multiply-add counts as 2 FLOPs; softmax counts 5 FLOPs per element.
class FlopCounter {
 public:
  void add(const std::string& category, std::uint64_t flops) { counts_[category] += flops; }

  std::uint64_t get(const std::string& category) const {
    auto it = counts_.find(category);
    return it == counts_.end() ? 0 : it->second;
  }

  /// Sum over categories whose name starts with `prefix`.
  std::uint64_t total(const std::string& prefix = "") const {
    std::uint64_t t = 0;
    for (const auto& [k, v] : counts_)
      if (k.compare(0, prefix.size(), prefix) == 0) t += v;
    return t;
  }

  const std::map<std::string, std::uint64_t>& counts() const { return counts_; }
  void reset() { counts_.clear(); }

 private:
  std::map<std::string, std::uint64_t> counts_;
};

inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 5;

}  // namespace hicross
