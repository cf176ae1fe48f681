#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/network.hpp"

namespace laneseg {

// LSEG checkpoint: magic "LSEG", version u16, tensor count u32, then per
// tensor: name length u16 + UTF-8 name + rank u8 + dims (u32 each) + raw
// 32-bit float data. All integers and floats little-endian. A CRC32 of all
// preceding bytes is appended so any single-byte corruption is detected.
class CheckpointError : public DataError {
 public:
  enum class Kind { bad_magic, bad_version, truncated, bad_checksum, bad_structure };

  CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace ckpt {

constexpr std::uint8_t kMagic[4] = {0x4C, 0x53, 0x45, 0x47};  // "LSEG"
constexpr std::uint16_t kVersion = 1;

constexpr std::size_t kMaxName = 256;
constexpr std::size_t kMaxRank = 4;
constexpr std::uint32_t kMaxDim = 1u << 24;
constexpr std::size_t kMaxElems = 1u << 26;
constexpr std::uint32_t kMaxTensors = 65536;

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Cursor {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "checkpoint truncated at byte " + std::to_string(pos));
    }
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos]) |
                      static_cast<std::uint16_t>(buf[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

[[noreturn]] inline void structure_error(const std::string& what) {
  throw CheckpointError(CheckpointError::Kind::bad_structure, "checkpoint: " + what);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const std::vector<Record>& records) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  detail::put_u16(out, kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const Record& r : records) {
    if (r.name.size() > kMaxName) detail::structure_error("tensor name too long: " + r.name);
    if (r.dims.empty() || r.dims.size() > kMaxRank) {
      detail::structure_error("bad rank for " + r.name);
    }
    if (r.numel() != r.values.size()) detail::structure_error("dims/data mismatch for " + r.name);
    detail::put_u16(out, static_cast<std::uint16_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) detail::put_u32(out, d);
    for (float v : r.values) detail::put_f32(out, v);
  }
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  detail::put_u32(out, crc);
  return out;
}

inline std::vector<Record> decode(std::span<const std::uint8_t> bytes) {
  detail::Cursor cur{bytes};
  cur.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, "checkpoint: bad magic");
  }
  cur.pos = 4;
  const std::uint16_t version = cur.u16();
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = cur.u32();
  if (count > kMaxTensors) detail::structure_error("tensor count out of range");

  // structural walk first so truncation is reported precisely, then the
  // whole-file checksum, then the actual load
  {
    detail::Cursor scan = cur;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint16_t name_len = scan.u16();
      if (name_len == 0 || name_len > kMaxName) detail::structure_error("bad name length");
      scan.need(name_len);
      scan.pos += name_len;
      const std::uint8_t rank = scan.u8();
      if (rank == 0 || rank > kMaxRank) detail::structure_error("bad tensor rank");
      std::size_t numel = 1;
      for (int d = 0; d < rank; ++d) {
        const std::uint32_t dim = scan.u32();
        if (dim == 0 || dim > kMaxDim) detail::structure_error("bad tensor dimension");
        numel *= dim;
        if (numel > kMaxElems) detail::structure_error("tensor too large");
      }
      scan.need(numel * 4);
      scan.pos += numel * 4;
    }
    if (scan.buf.size() - scan.pos < 4) {
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: missing checksum");
    }
    if (scan.buf.size() - scan.pos > 4) detail::structure_error("trailing bytes after checksum");
  }

  const std::size_t body = bytes.size() - 4;
  const auto expect = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  detail::Cursor tail{bytes, body};
  if (tail.u32() != expect) {
    throw CheckpointError(CheckpointError::Kind::bad_checksum, "checkpoint: checksum mismatch");
  }

  std::vector<Record> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    const std::uint16_t name_len = cur.u16();
    cur.need(name_len);
    r.name.assign(reinterpret_cast<const char*>(&bytes[cur.pos]), name_len);
    cur.pos += name_len;
    const std::uint8_t rank = cur.u8();
    r.dims.resize(rank);
    for (int d = 0; d < rank; ++d) r.dims[d] = cur.u32();
    r.values.resize(r.numel());
    for (auto& v : r.values) v = cur.f32();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ckpt

namespace detail {

inline void push_conv_records(std::vector<ckpt::Record>& out, const std::string& name,
                              const ConvParams<float>& p) {
  out.push_back({name + ".weight",
                 {static_cast<std::uint32_t>(p.weights.n), static_cast<std::uint32_t>(p.weights.c),
                  static_cast<std::uint32_t>(p.weights.h), static_cast<std::uint32_t>(p.weights.w)},
                 p.weights.data});
  out.push_back({name + ".bias", {static_cast<std::uint32_t>(p.bias.size())}, p.bias});
  out.push_back({name + ".meta",
                 {3},
                 {static_cast<float>(p.stride), static_cast<float>(p.pad_h),
                  static_cast<float>(p.pad_w)}});
}

inline void push_bn_records(std::vector<ckpt::Record>& out, const std::string& name,
                            const BatchNormParams<float>& p) {
  const auto len = static_cast<std::uint32_t>(p.gamma.size());
  out.push_back({name + ".gamma", {len}, p.gamma});
  out.push_back({name + ".beta", {len}, p.beta});
  out.push_back({name + ".running_mean", {len}, p.running_mean});
  out.push_back({name + ".running_var", {len}, p.running_var});
  out.push_back({name + ".meta", {2}, {p.eps, p.momentum}});
}

class RecordMap {
 public:
  explicit RecordMap(std::vector<ckpt::Record> records) {
    for (auto& r : records) {
      auto [it, inserted] = map_.emplace(r.name, std::move(r));
      if (!inserted) ckpt::detail::structure_error("duplicate tensor " + it->first);
    }
  }

  const ckpt::Record& take(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) ckpt::detail::structure_error("missing tensor " + name);
    taken_.insert(taken_.end(), name);
    return it->second;
  }

  bool contains(const std::string& name) const { return map_.count(name) > 0; }

  void finish() const {
    for (const auto& [name, rec] : map_) {
      bool used = false;
      for (const auto& t : taken_) {
        if (t == name) {
          used = true;
          break;
        }
      }
      if (!used) ckpt::detail::structure_error("unexpected tensor " + name);
    }
  }

 private:
  std::map<std::string, ckpt::Record> map_;
  std::vector<std::string> taken_;
};

inline ConvParams<float> load_conv(RecordMap& rm, const std::string& name) {
  const auto& w = rm.take(name + ".weight");
  if (w.dims.size() != 4) ckpt::detail::structure_error(name + ".weight must be rank 4");
  const auto& b = rm.take(name + ".bias");
  if (b.dims.size() != 1 || b.dims[0] != w.dims[0]) {
    ckpt::detail::structure_error(name + ".bias does not match output channels");
  }
  const auto& meta = rm.take(name + ".meta");
  if (meta.dims.size() != 1 || meta.dims[0] != 3) {
    ckpt::detail::structure_error(name + ".meta must hold [stride, pad_h, pad_w]");
  }
  ConvParams<float> p;
  p.weights = Tensor<float>(static_cast<int>(w.dims[0]), static_cast<int>(w.dims[1]),
                            static_cast<int>(w.dims[2]), static_cast<int>(w.dims[3]));
  p.weights.data = w.values;
  p.bias = b.values;
  p.stride = static_cast<int>(meta.values[0]);
  p.pad_h = static_cast<int>(meta.values[1]);
  p.pad_w = static_cast<int>(meta.values[2]);
  if (p.stride < 1 || p.pad_h < 0 || p.pad_w < 0) {
    ckpt::detail::structure_error(name + ".meta holds invalid stride/padding");
  }
  return p;
}

inline BatchNormParams<float> load_bn(RecordMap& rm, const std::string& name, int channels) {
  BatchNormParams<float> p;
  auto vec = [&](const char* field) {
    const auto& r = rm.take(name + "." + field);
    if (r.dims.size() != 1 || r.dims[0] != static_cast<std::uint32_t>(channels)) {
      ckpt::detail::structure_error(name + "." + field + " has wrong length");
    }
    return r.values;
  };
  p.gamma = vec("gamma");
  p.beta = vec("beta");
  p.running_mean = vec("running_mean");
  p.running_var = vec("running_var");
  const auto& meta = rm.take(name + ".meta");
  if (meta.dims.size() != 1 || meta.dims[0] != 2) {
    ckpt::detail::structure_error(name + ".meta must hold [eps, momentum]");
  }
  p.eps = meta.values[0];
  p.momentum = meta.values[1];
  if (!(p.eps > 0.0f)) ckpt::detail::structure_error(name + ".meta holds non-positive eps");
  return p;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const ModelParams<float>& m) {
  std::vector<ckpt::Record> records;
  for (std::size_t i = 0; i < m.encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i);
    detail::push_conv_records(records, base + ".conv", m.encoder[i].conv);
    detail::push_bn_records(records, base + ".bn", m.encoder[i].bn);
  }
  detail::push_conv_records(records, "gcn.a1", m.gcn.a1);
  detail::push_conv_records(records, "gcn.a2", m.gcn.a2);
  detail::push_conv_records(records, "gcn.b1", m.gcn.b1);
  detail::push_conv_records(records, "gcn.b2", m.gcn.b2);
  for (std::size_t i = 0; i < m.decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i);
    detail::push_conv_records(records, base + ".conv", m.decoder[i].conv);
    detail::push_bn_records(records, base + ".bn", m.decoder[i].bn);
  }
  detail::push_conv_records(records, "br.w1", m.br.w1);
  detail::push_conv_records(records, "br.w2", m.br.w2);
  records.push_back({"br.meta", {1}, {m.br.post_relu ? 1.0f : 0.0f}});
  detail::push_conv_records(records, "head", m.head);
  return ckpt::encode(records);
}

inline ModelParams<float> deserialize_model(std::span<const std::uint8_t> bytes) {
  detail::RecordMap rm(ckpt::decode(bytes));

  ModelParams<float> m;
  for (std::size_t i = 0; rm.contains("encoder." + std::to_string(i) + ".conv.weight"); ++i) {
    const std::string base = "encoder." + std::to_string(i);
    EncoderBlock<float> blk;
    blk.conv = detail::load_conv(rm, base + ".conv");
    blk.bn = detail::load_bn(rm, base + ".bn", blk.conv.c_out());
    m.encoder.push_back(std::move(blk));
  }
  if (m.encoder.empty()) ckpt::detail::structure_error("no encoder blocks");

  m.gcn.a1 = detail::load_conv(rm, "gcn.a1");
  m.gcn.a2 = detail::load_conv(rm, "gcn.a2");
  m.gcn.b1 = detail::load_conv(rm, "gcn.b1");
  m.gcn.b2 = detail::load_conv(rm, "gcn.b2");

  for (std::size_t i = 0; rm.contains("decoder." + std::to_string(i) + ".conv.weight"); ++i) {
    const std::string base = "decoder." + std::to_string(i);
    DecoderBlock<float> blk;
    blk.conv = detail::load_conv(rm, base + ".conv");
    blk.bn = detail::load_bn(rm, base + ".bn", blk.conv.c_out());
    m.decoder.push_back(std::move(blk));
  }
  if (m.decoder.size() != m.encoder.size()) {
    ckpt::detail::structure_error("encoder/decoder block counts differ");
  }

  m.br.w1 = detail::load_conv(rm, "br.w1");
  m.br.w2 = detail::load_conv(rm, "br.w2");
  const auto& br_meta = rm.take("br.meta");
  if (br_meta.dims.size() != 1 || br_meta.dims[0] != 1) {
    ckpt::detail::structure_error("br.meta must hold one flag");
  }
  m.br.post_relu = br_meta.values[0] != 0.0f;
  m.head = detail::load_conv(rm, "head");
  rm.finish();

  // channel-chain consistency
  int c = m.encoder.front().conv.c_in();
  for (std::size_t i = 0; i < m.encoder.size(); ++i) {
    if (m.encoder[i].conv.c_in() != c) {
      ckpt::detail::structure_error("encoder channel chain broken at block " + std::to_string(i));
    }
    c = m.encoder[i].conv.c_out();
  }
  for (const auto* g : {&m.gcn.a1, &m.gcn.a2, &m.gcn.b1, &m.gcn.b2}) {
    if (g->c_in() != c || g->c_out() != c) {
      ckpt::detail::structure_error("gcn convolutions must preserve bottleneck channels");
    }
  }
  for (std::size_t i = 0; i < m.decoder.size(); ++i) {
    if (m.decoder[i].conv.c_in() != c) {
      ckpt::detail::structure_error("decoder channel chain broken at block " + std::to_string(i));
    }
    c = m.decoder[i].conv.c_out();
  }
  if (m.br.w1.c_in() != c || m.br.w1.c_out() != c || m.br.w2.c_in() != c ||
      m.br.w2.c_out() != c) {
    ckpt::detail::structure_error("br convolutions must preserve channels");
  }
  if (m.head.c_in() != c) ckpt::detail::structure_error("head input channels broken");
  return m;
}

inline void save_checkpoint(const std::string& path, const ModelParams<float>& m) {
  const auto bytes = serialize_model(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to checkpoint: " + path);
}

inline ModelParams<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace laneseg
