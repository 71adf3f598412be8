// Copyright 2026 The ssldet Authors
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

#include "ssldet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <zlib.h>

#include "ssldet/error.hpp"

namespace ssldet {

namespace {

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::size_t begin, std::size_t end) : buf_(buf), pos_(begin), end_(end) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("checkpoint truncated");
  }
  const std::vector<unsigned char>& buf_;
  std::size_t pos_, end_;
};

std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, p, static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::vector<unsigned char> buf(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_u64(buf, params.size());
  const std::size_t payload_begin = buf.size();
  for (const auto& [name, p] : params) {
    put_u64(buf, name.size());
    buf.insert(buf.end(), name.begin(), name.end());
    put_u64(buf, p.value.rank());
    for (std::size_t d : p.value.shape()) put_u64(buf, d);
    for (double v : p.value.values()) put_u64(buf, std::bit_cast<std::uint64_t>(v));
  }
  const std::uint32_t crc = crc32_of(buf.data() + payload_begin, buf.size() - payload_begin);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(crc >> (8 * i)));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("failed writing checkpoint '" + path.string() + "'");
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t magic_len = kCheckpointMagic.size();
  if (buf.size() < magic_len) throw FormatError("checkpoint truncated");
  const std::string magic(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(magic_len));
  if (magic != kCheckpointMagic) {
    if (magic.compare(0, 6, kCheckpointMagic.substr(0, 6)) == 0) {
      throw FormatError("checkpoint version mismatch: expected " + std::string(kCheckpointMagic) + ", found " + magic);
    }
    throw FormatError("not a checkpoint file (bad magic)");
  }
  if (buf.size() < magic_len + 8 + 4) throw FormatError("checkpoint truncated");

  const std::size_t payload_begin = magic_len + 8;
  const std::size_t payload_end = buf.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[payload_end + i]) << (8 * i);

  Reader head(buf, magic_len, payload_begin);
  const std::uint64_t count = head.u64();

  Reader r(buf, payload_begin, payload_end);
  ParamStore params;
  try {
    for (std::uint64_t e = 0; e < count; ++e) {
      const std::string name = r.bytes(r.u64());
      const std::uint64_t rank = r.u64();
      if (rank > 8) throw FormatError("checkpoint entry '" + name + "' has implausible rank");
      Shape shape(rank);
      for (auto& d : shape) d = r.u64();
      std::vector<double> values(shape_size(shape));
      for (double& v : values) v = std::bit_cast<double>(r.u64());
      params.add(name, Tensor(std::move(shape), std::move(values)));
    }
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("corrupt checkpoint: ") + e.what());
  }
  if (!r.done()) throw FormatError("checkpoint has trailing data before checksum");
  if (crc32_of(buf.data() + payload_begin, payload_end - payload_begin) != stored) {
    throw FormatError("checkpoint checksum mismatch");
  }
  return params;
}

std::size_t load_prefixed(ParamStore& target, const ParamStore& source, std::string_view prefix) {
  std::size_t copied = 0;
  for (const auto& [name, p] : source) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    if (!target.contains(name)) throw FormatError("partial load: '" + name + "' does not exist in target");
    Parameter& dst = target.get(name);
    if (dst.value.shape() != p.value.shape()) {
      throw FormatError("partial load: '" + name + "' has shape " + shape_string(p.value.shape()) + ", target expects " +
                        shape_string(dst.value.shape()));
    }
    dst.value = p.value;
    ++copied;
  }
  return copied;
}

}  // namespace ssldet
