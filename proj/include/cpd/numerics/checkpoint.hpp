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

#ifndef CPD_NUMERICS_CHECKPOINT_HPP_
#define CPD_NUMERICS_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cpd/numerics/param_set.hpp"

namespace cpd {

// Checkpoint layout (all integers and floats little-endian):
//
//   "CPCKPT01"          8 bytes
//   version             u32 (kCheckpointVersion)
//   entry count         u32
//   entries             name_len u16, name (UTF-8), rank u8,
//                       dims u32 x rank, payload f32 x prod(dims)
//   crc32               u32 over every byte after the version field
//
// Matrices are written row-major. Scalar metadata (schedule, architecture,
// model kind, distillation config) are rank-0 entries prefixed "meta.".
inline constexpr char kCheckpointMagic[9] = "CPCKPT01";
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kMetaPrefix = "meta.";

struct Checkpoint {
  ParamSet<float> params;
  std::map<std::string, float> meta;

  float meta_at(const std::string& key) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_params(const ParamSet<float>& params, const std::filesystem::path& path);
ParamSet<float> load_params(const std::filesystem::path& path);

// Copies a loaded set into an architecture's layout. Throws naming the first
// missing, unexpected or mis-shaped tensor.
ParamSet<float> load_into(const ParamSet<float>& layout,
                          const ParamSet<float>& loaded);

// Little-endian byte buffer helpers shared with the dataset format.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void raw(const void* data, std::size_t n);
  void str16(const std::string& s);
  std::vector<std::uint8_t>& bytes() { return bytes_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  std::string str(std::size_t n);
  std::string str16() { return str(u16()); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n);
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n);

// Wraps payload with magic, version and trailing CRC and writes atomically.
void write_framed_file(const std::filesystem::path& path, const char magic[8],
                       std::uint32_t version,
                       const std::vector<std::uint8_t>& payload);

// Validates magic, version and CRC; returns the payload bytes.
std::vector<std::uint8_t> read_framed_file(const std::filesystem::path& path,
                                           const char magic[8],
                                           std::uint32_t version);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace cpd

#endif  // CPD_NUMERICS_CHECKPOINT_HPP_
