#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "hicross/decoder/model.hpp"
#include "hicross/numerics/rng.hpp"

namespace hicross::harness {

// Layout, all integers little-endian:
//   "HXCK" | u32 version | u32 dtype (4 = float32, 8 = float64)
//   u32 config bytes | model config as key=value text
//   u32 tensor count | per tensor: u32 name bytes | name | u32 rank | u64 dims... | values
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  using B = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
  B bits;
  std::memcpy(&bits, &v, sizeof v);
  for (std::size_t i = 0; i < sizeof v; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path) : d_(data), path_(std::move(path)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    using B = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    B bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<B>(static_cast<unsigned char>(d_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == d_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > d_.size()) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  const std::string& d_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const decoder::Model<T>& model) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::string out = "HXCK";
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint32_t>(sizeof(T)));
  const std::string cfg = model.config().to_kv();
  detail::put_le(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  std::uint32_t count = 0;
  for ([[maybe_unused]] const auto& p : model.params()) ++count;
  detail::put_le(out, count);
  for (const auto& p : model.params()) {
    detail::put_le(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    detail::put_le(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) detail::put_le(out, static_cast<std::uint64_t>(d));
    for (std::size_t i = 0; i < p.value.size(); ++i) detail::put_le(out, p.value[i]);
  }
  return out;
}

template <class T>
void write_checkpoint(const decoder::Model<T>& model, const std::string& path) {
  const std::string blob = serialize_checkpoint(model);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!os) throw CheckpointError("write failed for " + path);
}

/// Rebuilds the model from the stored config, then loads every tensor.
/// Names, shapes and dtype must match exactly.
template <class T>
decoder::Model<T> read_checkpoint(const std::string& path) {
  const std::string data = detail::slurp(path);
  detail::Reader r(data, path);
  if (r.bytes(4) != "HXCK") throw CheckpointError(path + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError(path + ": unsupported version " + std::to_string(version));
  const auto dtype = r.get<std::uint32_t>();
  if (dtype != sizeof(T)) throw CheckpointError(path + ": stored element size " + std::to_string(dtype) + " does not match");
  const auto cfg_len = r.get<std::uint32_t>();
  decoder::Model<T> model(decoder::ModelConfig::from_kv(r.bytes(cfg_len)));
  const auto count = r.get<std::uint32_t>();
  std::size_t expected = 0;
  for ([[maybe_unused]] const auto& p : model.params()) ++expected;
  if (count != expected) throw CheckpointError(path + ": tensor count mismatch");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.bytes(r.get<std::uint32_t>());
    if (!model.params().contains(name)) throw CheckpointError(path + ": unknown tensor " + name);
    auto& p = model.params().get(name);
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    if (shape != p.value.shape())
      throw CheckpointError(path + ": shape of " + name + " is " + shape_str(shape) + ", model expects " +
                            shape_str(p.value.shape()));
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = r.get<T>();
  }
  if (!r.done()) throw CheckpointError(path + ": trailing bytes");
  return model;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// FNV-1a of the serialized checkpoint, as 16 hex digits.
template <class T>
std::string checkpoint_hash(const decoder::Model<T>& model) {
  const std::string blob = serialize_checkpoint(model);
  return hex64(fnv1a(blob.data(), blob.size()));
}

inline std::string file_hash(const std::string& path) {
  const std::string data = detail::slurp(path);
  return hex64(fnv1a(data.data(), data.size()));
}

}  // namespace hicross::harness
