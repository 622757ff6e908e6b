#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "seishet/imageio.hpp"
#include "seishet/model.hpp"

namespace seishet {

// Little-endian layout:
//   "SHNCKPT1"                                  8 bytes
//   version u32 (= 1), variant u8 (0 se, 1 self)
//   se_ratio u32, heads u32, key_depth u32, value_depth u32
//   tensor count u32
//   per tensor: name_len u32, name (UTF-8), rank u32, dims u32 x rank, f32 x numel
//   flag count u32
//   per flag: name_len u32, name, frozen u8
inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::string source) : buf_(buf), source_(std::move(source)) {}

  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(source_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return buf_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const auto n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Network<float>& net) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(net.variant));
  w.u32(net.hyper.se_ratio);
  w.u32(net.hyper.heads);
  w.u32(net.hyper.key_depth);
  w.u32(net.hyper.value_depth);
  const auto infos = parameter_infos(net);
  const auto tensors = parameter_tensors(net);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    w.str(infos[i].name);
    w.u32(static_cast<std::uint32_t>(tensors[i]->rank()));
    for (auto d : tensors[i]->shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : tensors[i]->data()) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(infos.size()));
  for (std::size_t i = 0; i < infos.size(); ++i) {
    w.str(infos[i].name);
    w.u8(net.frozen.at(i));
  }
  return w.buffer();
}

inline Network<float> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                             const std::string& source = "checkpoint") {
  detail::ByteReader r(bytes, source);
  char magic[8];
  r.raw(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(source + ": bad magic, not a seishet checkpoint");
  }
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto variant_tag = r.u8("variant");
  if (variant_tag > 1) throw FormatError(source + ": unknown variant tag " + std::to_string(variant_tag));
  Hyperparameters hyper;
  hyper.se_ratio = r.u32("se_ratio");
  hyper.heads = r.u32("heads");
  hyper.key_depth = r.u32("key_depth");
  hyper.value_depth = r.u32("value_depth");

  Network<float> net;
  try {
    net = make_network<float>(static_cast<AttentionVariant>(variant_tag), hyper);
  } catch (const ConfigError& e) {
    throw IntegrityError(source + ": invalid hyperparameters: " + e.what());
  }
  const auto infos = parameter_infos(net);
  auto tensors = parameter_tensors(net);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < infos.size(); ++i) index[infos[i].name] = i;

  std::vector<bool> seen(infos.size(), false);
  const auto count = r.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name = r.str("tensor name");
    const auto rank = r.u32("tensor rank");
    if (rank > 8) throw FormatError(source + ": implausible rank " + std::to_string(rank) + " for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32("tensor dims");
    const auto it = index.find(name);
    if (it == index.end()) {
      throw IntegrityError(source + ": unexpected tensor '" + name + "' for variant " +
                           std::string(variant_name(net.variant)));
    }
    if (seen[it->second]) throw IntegrityError(source + ": duplicate tensor '" + name + "'");
    Tensor<float>& dst = *tensors[it->second];
    if (shape != dst.shape()) {
      throw IntegrityError(source + ": tensor '" + name + "' has shape " + shape_str(shape) +
                           ", variant requires " + shape_str(dst.shape()));
    }
    r.need(dst.size() * 4, "tensor data");
    for (auto& v : dst.data()) v = r.f32("tensor data");
    seen[it->second] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw IntegrityError(source + ": missing tensor '" + infos[i].name + "'");
  }
  const auto flags = r.u32("flag count");
  if (flags != infos.size()) {
    throw IntegrityError(source + ": " + std::to_string(flags) + " freeze flags for " +
                         std::to_string(infos.size()) + " tensors");
  }
  for (std::uint32_t f = 0; f < flags; ++f) {
    const auto name = r.str("flag name");
    const auto v = r.u8("flag value");
    const auto it = index.find(name);
    if (it == index.end()) throw IntegrityError(source + ": freeze flag for unknown tensor '" + name + "'");
    if (v > 1) throw FormatError(source + ": freeze flag for '" + name + "' is not 0 or 1");
    net.frozen[it->second] = v;
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after checkpoint payload");
  return net;
}

inline void save_checkpoint(const Network<float>& net, const std::filesystem::path& path) {
  write_bytes(path, serialize_checkpoint(net));
}

inline Network<float> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_bytes(path), path.string());
}

}  // namespace seishet
