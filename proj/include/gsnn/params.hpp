#pragma once

#include "gsnn/binary_io.hpp"
#include "gsnn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gsnn {

/// Named, shaped parameter tensors with per-tensor freeze flags.
///
/// Insertion order is preserved so checkpoints and optimizer traversal are
/// deterministic. A frozen entry is never modified by the optimizer.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool frozen = false;
  };

  Tensor& add(const std::string& name, Tensor value, bool frozen = false) {
    if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(value), frozen});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Entry& entry(const std::string& name) { return entries_[lookup(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[lookup(name)]; }
  Tensor& at(const std::string& name) { return entry(name).value; }
  const Tensor& at(const std::string& name) const { return entry(name).value; }
  bool frozen(const std::string& name) const { return entry(name).frozen; }

  void set_frozen(const std::string& name, bool f) { entry(name).frozen = f; }

  /// Sets the freeze flag on every entry whose name starts with `prefix`.
  std::size_t set_frozen_prefix(std::string_view prefix, bool f) {
    std::size_t n = 0;
    for (auto& e : entries_)
      if (std::string_view(e.name).starts_with(prefix)) {
        e.frozen = f;
        ++n;
      }
    return n;
  }
  void freeze_all() {
    for (auto& e : entries_) e.frozen = true;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Copies every entry of `other` into this set; names must be disjoint.
  void merge(const ParameterSet& other) {
    for (const auto& e : other.entries_) add(e.name, e.value, e.frozen);
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.frozen != y.frozen || !(x.value == y.value)) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients keyed by parameter name.
using Gradients = std::map<std::string, Tensor>;

/// Portable uniform doubles from a 64-bit Mersenne twister (53-bit mantissa).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Xavier-uniform weight matrix [fan_out x fan_in].
inline Tensor xavier_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
  Tensor w = Tensor::matrix(fan_out, fan_in);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
  return w;
}

// Checkpoint file: "GSNN0001", u32 count, then per entry
// u16 name length, name, u8 frozen, u8 rank, u32 extents, f64 payload.
inline constexpr std::string_view kCheckpointMagic = "GSNN0001";

inline std::vector<unsigned char> encode_checkpoint(const ParameterSet& ps) {
  io::Writer w;
  w.text(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (const auto& e : ps.entries()) {
    if (e.name.size() > 0xffff) throw std::invalid_argument("parameter name too long: " + e.name);
    if (e.value.rank() > 0xff) throw std::invalid_argument("parameter rank too large: " + e.name);
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.text(e.name);
    w.u8(e.frozen ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(e.value.rank()));
    for (auto x : e.value.shape()) w.u32(static_cast<std::uint32_t>(x));
    w.f64s(e.value.data(), e.value.size());
  }
  return w.buffer();
}

inline ParameterSet decode_checkpoint(std::vector<unsigned char> bytes) {
  io::Reader r(std::move(bytes));
  const std::size_t magic_at = r.offset();
  if (r.text(kCheckpointMagic.size(), "magic") != kCheckpointMagic)
    throw io::FormatError("bad checkpoint magic", magic_at);
  const std::uint32_t n = r.u32("entry count");
  ParameterSet ps;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint16_t len = r.u16("name length");
    std::string name = r.text(len, "name");
    const std::size_t flag_at = r.offset();
    const std::uint8_t frozen = r.u8("frozen flag");
    if (frozen > 1) throw io::FormatError("bad frozen flag for '" + name + "'", flag_at);
    const std::uint8_t rank = r.u8("rank");
    Tensor::Shape shape(rank);
    std::size_t count = 1;
    for (auto& x : shape) {
      count *= (x = r.u32("extent"));
      if (count > r.remaining() / 8) r.need(r.remaining() + 1, "payload");
    }
    r.need(count * 8, "payload");
    Tensor t(shape);
    r.f64s(t.data(), t.size(), "payload");
    const std::size_t at = r.offset();
    if (ps.contains(name)) throw io::FormatError("duplicate parameter '" + name + "'", at);
    ps.add(name, std::move(t), frozen != 0);
  }
  if (r.remaining() != 0) throw io::FormatError("trailing bytes after last entry", r.offset());
  return ps;
}

inline void save_checkpoint(const ParameterSet& ps, const std::string& path) {
  io::write_file(path, encode_checkpoint(ps));
}

inline ParameterSet load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace gsnn
