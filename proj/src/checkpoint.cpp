#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <zlib.h>

#include "ynet/network.hpp"

namespace ynet {

namespace {

constexpr char kMagic[4] = {'Y', 'N', 'E', 'T'};

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t>& buffer() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError(Kind::truncated, "truncated checkpoint");
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> data) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, data.data(), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(c);
}

struct Record {
  std::vector<std::size_t> dims;
  std::vector<float> values;
};

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const NetworkGraph& g) {
  if (!g.config()) throw CheckpointError(Kind::no_config, "save_checkpoint: graph has no network config");
  std::vector<const Param*> persistent;
  for (const Param* p : g.params()) {
    if (p->persistent) persistent.push_back(p);
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(g.config()->to_text());
  w.u32(static_cast<std::uint32_t>(persistent.size()));
  for (const Param* p : persistent) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->dims.size()));
    for (std::size_t d : p->dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p->value.data()) w.f32(v);
  }
  const std::uint32_t crc = crc_of(w.buffer());
  w.u32(crc);
  return w.take();
}

NetworkGraph load_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw CheckpointError(Kind::truncated, "truncated checkpoint");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError(Kind::bad_magic, "not a YNET checkpoint");
  if (bytes.size() < 8) throw CheckpointError(Kind::truncated, "truncated checkpoint");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch, "checkpoint version " + std::to_string(version) + " unsupported");
  }
  if (bytes.size() < 12) throw CheckpointError(Kind::truncated, "truncated checkpoint");
  // Everything but the trailing CRC.
  Reader body(bytes.subspan(8, bytes.size() - 12));
  const std::string config_text = body.str();
  const std::uint32_t count = body.u32();
  std::map<std::string, Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = body.str();
    Record rec;
    const std::uint32_t rank = body.u32();
    if (rank > 4) throw CheckpointError(Kind::shape_mismatch, "checkpoint parameter " + name + " has rank > 4");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      rec.dims.push_back(body.u32());
      n *= rec.dims.back();
      body.need(n);  // every element takes 4 bytes, so this bounds n before it can overflow
    }
    body.need(n * 4);
    rec.values.resize(n);
    for (auto& v : rec.values) v = body.f32();
    records.emplace(name, std::move(rec));
  }
  if (body.remaining() != 0) throw CheckpointError(Kind::checksum_mismatch, "trailing bytes before checksum");
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (stored != crc_of(bytes.first(bytes.size() - 4))) {
    throw CheckpointError(Kind::checksum_mismatch, "checkpoint checksum mismatch");
  }

  NetworkGraph g = build_yedroudj(YedroudjConfig::from_text(config_text));
  std::size_t used = 0;
  for (Param* p : g.params()) {
    if (!p->persistent) continue;
    const auto it = records.find(p->name);
    if (it == records.end()) throw CheckpointError(Kind::missing_parameter, "checkpoint lacks parameter " + p->name);
    if (it->second.dims != p->dims) {
      throw CheckpointError(Kind::shape_mismatch, "checkpoint parameter " + p->name + " has mismatched shape");
    }
    std::copy(it->second.values.begin(), it->second.values.end(), p->value.data().begin());
    ++used;
  }
  if (used != records.size()) {
    throw CheckpointError(Kind::unknown_parameter, "checkpoint has parameters the network does not know");
  }
  return g;
}

void write_checkpoint_file(const NetworkGraph& g, const std::string& path) {
  const auto bytes = save_checkpoint(g);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

NetworkGraph read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

}  // namespace ynet
