#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cocgan/error.hpp"
#include "cocgan/module.hpp"

// Binary layout, all integers little-endian u32 unless noted:
//   "COCG" | version | flags | param count
//   per param: name length | name bytes | rank | extents... | f32 payload
//   flags & 1: optimizer  -> kind | step (u64) | buffer count | (length | f32 payload)...
//   flags & 2: rng state  -> length | bytes
//   flags & 4: metadata   -> length | "key=value\n" text

namespace cocgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'C', 'O', 'C', 'G'};

struct StoredTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

struct OptimizerBlob {
  std::uint32_t kind = 0;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> buffers;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<StoredTensor> params;
  std::optional<OptimizerBlob> optimizer;
  std::optional<std::string> rng_state;
  std::map<std::string, std::string> metadata;
};

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { buf_.append(s); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string buf) : buf_(std::move(buf)) {}
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    return lo | (static_cast<std::uint64_t>(u32(what)) << 32);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n)
      throw LoadError(std::string("checkpoint: truncated while reading ") + what + " at offset " + std::to_string(pos_));
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  detail::Writer w;
  w.bytes(std::string(kCheckpointMagic, 4));
  w.u32(ck.version);
  std::uint32_t flags = 0;
  if (ck.optimizer) flags |= 1u;
  if (ck.rng_state) flags |= 2u;
  if (!ck.metadata.empty()) flags |= 4u;
  w.u32(flags);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto e : p.shape) w.u32(e);
    for (float v : p.data) w.f32(v);
  }
  if (ck.optimizer) {
    w.u32(ck.optimizer->kind);
    w.u64(ck.optimizer->step);
    w.u32(static_cast<std::uint32_t>(ck.optimizer->buffers.size()));
    for (const auto& b : ck.optimizer->buffers) {
      w.u32(static_cast<std::uint32_t>(b.size()));
      for (float v : b) w.f32(v);
    }
  }
  if (ck.rng_state) {
    w.u32(static_cast<std::uint32_t>(ck.rng_state->size()));
    w.bytes(*ck.rng_state);
  }
  if (!ck.metadata.empty()) {
    std::string text;
    for (const auto& [k, v] : ck.metadata) text += k + "=" + v + "\n";
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.bytes(text);
  }
  return w.str();
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  Checkpoint ck;
  if (r.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) throw LoadError("checkpoint: bad magic, not a COCG file");
  ck.version = r.u32("version");
  if (ck.version != kCheckpointVersion)
    throw LoadError("checkpoint: unsupported version " + std::to_string(ck.version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  const auto flags = r.u32("flags");
  if (flags & ~7u) throw LoadError("checkpoint: unknown header flags");
  const auto count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.bytes(r.u32("name length"), "parameter name");
    const auto rank = r.u32("rank");
    if (rank > 8) throw LoadError("checkpoint: implausible rank for '" + t.name + "'");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u32("extent"));
      n *= t.shape.back();
    }
    t.data.resize(n);
    for (auto& v : t.data) v = r.f32("parameter payload");
    ck.params.push_back(std::move(t));
  }
  if (flags & 1u) {
    OptimizerBlob ob;
    ob.kind = r.u32("optimizer kind");
    ob.step = r.u64("optimizer step");
    const auto nb = r.u32("optimizer buffer count");
    for (std::uint32_t i = 0; i < nb; ++i) {
      std::vector<float> b(r.u32("optimizer buffer length"));
      for (auto& v : b) v = r.f32("optimizer buffer");
      ob.buffers.push_back(std::move(b));
    }
    ck.optimizer = std::move(ob);
  }
  if (flags & 2u) ck.rng_state = r.bytes(r.u32("rng state length"), "rng state");
  if (flags & 4u) {
    std::istringstream text(r.bytes(r.u32("metadata length"), "metadata"));
    std::string line;
    while (std::getline(text, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw LoadError("checkpoint: malformed metadata line");
      ck.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  if (!r.done()) throw LoadError("checkpoint: trailing bytes at offset " + std::to_string(r.pos()));
  return ck;
}

template <class T>
std::vector<StoredTensor> snapshot_params(const ParamList<T>& params) {
  std::vector<StoredTensor> out;
  for (const auto& p : params) {
    StoredTensor t;
    t.name = p.name;
    for (auto e : p.tensor.shape()) t.shape.push_back(static_cast<std::uint32_t>(e));
    t.data.assign(p.tensor.data().begin(), p.tensor.data().end());
    out.push_back(std::move(t));
  }
  return out;
}

// Copies stored values into the model. Names, order and shapes must match.
template <class T>
void restore_params(const Checkpoint& ck, ParamList<T>& params) {
  const auto n = std::min(ck.params.size(), params.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = ck.params[i];
    auto& dst = params[i];
    std::vector<std::uint32_t> want;
    for (auto e : dst.tensor.shape()) want.push_back(static_cast<std::uint32_t>(e));
    auto shape_str = [](const std::vector<std::uint32_t>& s) {
      std::string o = "[";
      for (std::size_t k = 0; k < s.size(); ++k) o += (k ? "," : "") + std::to_string(s[k]);
      return o + "]";
    };
    if (src.shape != want)
      throw LoadError("checkpoint: shape mismatch for '" + dst.name + "': file " + shape_str(src.shape) + " vs model " +
                      shape_str(want));
    if (src.name != dst.name)
      throw LoadError("checkpoint: parameter " + std::to_string(i) + " is '" + src.name + "' but model expects '" +
                      dst.name + "'");
  }
  if (ck.params.size() != params.size())
    throw LoadError("checkpoint: holds " + std::to_string(ck.params.size()) + " parameters, model has " +
                    std::to_string(params.size()) +
                    (n < params.size() ? " (first missing: '" + params[n].name + "')" : std::string()));
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = params[i].tensor.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(ck.params[i].data[k]);
  }
}

inline void write_checkpoint_file(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError("checkpoint: cannot open '" + path + "' for writing");
  const auto bytes = encode_checkpoint(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw LoadError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

template <class Model>
void save_model(const std::string& path, const Model& m, std::map<std::string, std::string> metadata = {}) {
  Checkpoint ck;
  ck.params = snapshot_params(m.parameters());
  ck.metadata = std::move(metadata);
  write_checkpoint_file(path, ck);
}

template <class Model>
Checkpoint load_model(const std::string& path, Model& m) {
  auto ck = read_checkpoint_file(path);
  auto params = m.parameters();
  restore_params(ck, params);
  return ck;
}

}  // namespace cocgan
