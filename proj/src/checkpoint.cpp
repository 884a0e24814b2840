// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "ide/image_io.hpp"

namespace ide {

namespace {

constexpr char kMagic[8] = {'I', 'D', 'E', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos, std::size_t end) : b_(bytes), pos_(pos), end_(end) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string& b_;
  std::size_t pos_, end_;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t begin, std::size_t end) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + begin), static_cast<uInt>(end - begin));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::set<std::string> seen;
  for (const auto& t : tensors) {
    if (!seen.insert(t.name).second) throw ContractError("checkpoint: duplicate tensor name '" + t.name + "'");
    if (static_cast<Index>(t.data.size()) != numel(t.shape))
      throw ContractError("checkpoint: tensor '" + t.name + "' payload does not match its shape");
  }
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  const std::size_t body = out.size();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(kDtypeF32));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (Index e : t.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  put_u32(out, crc_of(out, body, out.size()));
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  Reader head(bytes, sizeof(kMagic), bytes.size());
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  const std::size_t body = head.pos(), end = bytes.size() - 4;
  Reader tail(bytes, end, bytes.size());
  if (tail.u32() != crc_of(bytes, body, end)) throw CheckpointError("checkpoint CRC mismatch (file corrupt)");

  Reader r(bytes, body, end);
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    if (!seen.insert(t.name).second) throw CheckpointError("checkpoint: duplicate tensor name '" + t.name + "'");
    if (r.u8() != kDtypeF32) throw CheckpointError("checkpoint: unsupported dtype for '" + t.name + "'");
    const std::uint32_t rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<Index>(r.u32()));
    const Index n = numel(t.shape);
    t.data.resize(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) t.data[k] = std::bit_cast<float>(r.u32());
    out.push_back(std::move(t));
  }
  if (r.pos() != end) throw CheckpointError("checkpoint: trailing bytes before CRC");
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

double meta_value(const std::vector<NamedTensor>& tensors, const std::string& name) {
  const NamedTensor* t = find_tensor(tensors, name);
  if (!t || t->data.size() != 2) throw CheckpointError("checkpoint lacks scalar '" + name + "'");
  return static_cast<double>(t->data[0]) + static_cast<double>(t->data[1]);
}

NamedTensor meta_tensor(const std::string& name, double value) {
  const float hi = static_cast<float>(value);
  return {name, {2}, {hi, static_cast<float>(value - static_cast<double>(hi))}};
}

template <typename S>
std::vector<NamedTensor> export_params(const ParamStore<S>& store) {
  std::vector<NamedTensor> out;
  for (const auto& e : store.entries()) {
    NamedTensor t{e.name, e.tensor.shape(), {}};
    t.data.resize(static_cast<std::size_t>(e.tensor.size()));
    for (Index i = 0; i < e.tensor.size(); ++i) t.data[i] = static_cast<float>(e.tensor.value()[i]);
    out.push_back(std::move(t));
  }
  return out;
}

template <typename S>
void import_params(ParamStore<S>& store, const std::vector<NamedTensor>& tensors) {
  for (const auto& e : store.entries()) {
    const NamedTensor* t = find_tensor(tensors, e.name);
    if (!t) throw CheckpointError("checkpoint lacks tensor '" + e.name + "'");
    if (t->shape != e.tensor.shape())
      throw CheckpointError("checkpoint tensor '" + e.name + "' has shape " + to_string(t->shape) + ", model expects " +
                            to_string(e.tensor.shape()));
    typename Tensor<S>::Array v(e.tensor.size());
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(t->data[i]);
    store.assign(e.name, v);
  }
}

template std::vector<NamedTensor> export_params<float>(const ParamStore<float>&);
template std::vector<NamedTensor> export_params<double>(const ParamStore<double>&);
template void import_params<float>(ParamStore<float>&, const std::vector<NamedTensor>&);
template void import_params<double>(ParamStore<double>&, const std::vector<NamedTensor>&);

}  // namespace ide
