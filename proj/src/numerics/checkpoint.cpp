// Copyright 2026 The cp-distill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cpd/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <zlib.h>

namespace cpd {
namespace {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

bool has_meta_prefix(const std::string& name) {
  return name.rfind(kMetaPrefix, 0) == 0;
}

}  // namespace

float Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end())
    throw FormatError("checkpoint is missing metadata '" + key + "'");
  return it->second;
}

void ByteWriter::u16(std::uint16_t v) { raw(&v, 2); }
void ByteWriter::u32(std::uint32_t v) { raw(&v, 4); }
void ByteWriter::f32(float v) { raw(&v, 4); }

void ByteWriter::raw(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  bytes_.insert(bytes_.end(), p, p + n);
}

void ByteWriter::str16(const std::string& s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max())
    throw FormatError("string too long to serialize: " + s.substr(0, 32));
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s.data(), s.size());
}

void ByteReader::need(std::size_t n) {
  if (size_ - pos_ < n)
    throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) +
                      " (need " + std::to_string(n) + ", have " +
                      std::to_string(size_ - pos_) + ")");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v;
  std::memcpy(&v, data_ + pos_, 2);
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, data_ + pos_, 4);
  pos_ += 4;
  return v;
}

float ByteReader::f32() {
  need(4);
  float v;
  std::memcpy(&v, data_ + pos_, 4);
  pos_ += 4;
  return v;
}

std::string ByteReader::str(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_framed_file(const std::filesystem::path& path, const char magic[8],
                       std::uint32_t version,
                       const std::vector<std::uint8_t>& payload) {
  ByteWriter w;
  w.raw(magic, 8);
  w.u32(version);
  w.raw(payload.data(), payload.size());
  w.u32(crc32_of(payload.data(), payload.size()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(w.bytes().data()),
              static_cast<std::streamsize>(w.size()));
    if (!out) throw FormatError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_framed_file(const std::filesystem::path& path,
                                           const char magic[8],
                                           std::uint32_t version) {
  const auto bytes = read_file_bytes(path);
  const std::string where = "'" + path.string() + "'";
  if (bytes.size() < 16)
    throw FormatError(where + ": truncated header (" +
                      std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), magic, 8) != 0)
    throw FormatError(where + ": bad magic, expected '" + std::string(magic, 8) +
                      "'");
  std::uint32_t got_version;
  std::memcpy(&got_version, bytes.data() + 8, 4);
  if (got_version != version)
    throw FormatError(where + ": unsupported format version " +
                      std::to_string(got_version) + " (expected " +
                      std::to_string(version) + ")");
  const std::size_t payload_size = bytes.size() - 16;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t crc = crc32_of(bytes.data() + 12, payload_size);
  if (crc != stored_crc)
    throw FormatError(where + ": CRC mismatch (file truncated or corrupted)");
  return std::vector<std::uint8_t>(bytes.begin() + 12,
                                   bytes.begin() + 12 + payload_size);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(ckpt.params.size() + ckpt.meta.size()));
  for (const auto& [name, tensor] : ckpt.params) {
    if (has_meta_prefix(name))
      throw FormatError("parameter name '" + name + "' uses the meta prefix");
    w.str16(name);
    const auto& m = tensor.value;
    w.u8(static_cast<std::uint8_t>(tensor.rank));
    if (tensor.rank == 1) {
      w.u32(static_cast<std::uint32_t>(m.rows()));
    } else {
      w.u32(static_cast<std::uint32_t>(m.rows()));
      w.u32(static_cast<std::uint32_t>(m.cols()));
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(m(i, j));
  }
  for (const auto& [key, value] : ckpt.meta) {
    w.str16(kMetaPrefix + key);
    w.u8(0);
    w.f32(value);
  }
  write_framed_file(path, kCheckpointMagic, kCheckpointVersion, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto payload =
      read_framed_file(path, kCheckpointMagic, kCheckpointVersion);
  ByteReader r(payload.data(), payload.size(), "checkpoint '" + path.string() + "'");
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.str16();
    const int rank = r.u8();
    if (rank > 2)
      throw FormatError("checkpoint entry '" + name + "' has unsupported rank " +
                        std::to_string(rank));
    if (rank == 0) {
      if (!has_meta_prefix(name))
        throw FormatError("rank-0 entry '" + name + "' outside meta namespace");
      ckpt.meta[name.substr(std::strlen(kMetaPrefix))] = r.f32();
      continue;
    }
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = rank == 2 ? r.u32() : 1;
    if (r.remaining() / 4 < static_cast<std::size_t>(rows) * cols)
      throw FormatError("checkpoint entry '" + name + "' is truncated");
    MatrixXf m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
    ckpt.params.add(name, std::move(m), rank);
  }
  if (r.remaining() != 0)
    throw FormatError("checkpoint '" + path.string() + "': " +
                      std::to_string(r.remaining()) + " trailing bytes");
  return ckpt;
}

void save_params(const ParamSet<float>& params, const std::filesystem::path& path) {
  save_checkpoint(Checkpoint{params, {}}, path);
}

ParamSet<float> load_params(const std::filesystem::path& path) {
  return load_checkpoint(path).params;
}

ParamSet<float> load_into(const ParamSet<float>& layout,
                          const ParamSet<float>& loaded) {
  ParamSet<float> out;
  for (const auto& [name, tensor] : layout) {
    if (!loaded.contains(name))
      throw FormatError("checkpoint is missing parameter '" + name + "'");
    const auto& m = loaded[name];
    if (m.rows() != tensor.value.rows() || m.cols() != tensor.value.cols())
      throw FormatError("checkpoint parameter '" + name + "' is " +
                        shape_str(m.rows(), m.cols()) + ", expected " +
                        shape_str(tensor.value.rows(), tensor.value.cols()));
    out.add(name, m, tensor.rank);
  }
  for (const auto& [name, _] : loaded)
    if (!layout.contains(name))
      throw FormatError("checkpoint has unexpected parameter '" + name + "'");
  return out;
}

}  // namespace cpd
