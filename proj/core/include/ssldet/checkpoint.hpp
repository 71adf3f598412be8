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

#pragma once

#include <filesystem>
#include <string_view>

#include "ssldet/tensor.hpp"

namespace ssldet {

/// Binary checkpoint layout, all integers and floats little-endian:
///
///   "SSLDET01"
///   u64 entry count
///   per entry: u64 name length, UTF-8 name, u64 rank, u64 dims[rank], f64 values
///   u32 CRC-32 over every byte between the entry count and the checksum
inline constexpr std::string_view kCheckpointMagic = "SSLDET01";

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

/// Copies every `prefix`-named tensor of `source` into `target`. Each copied
/// name must already exist in `target` with the same shape; everything else in
/// `target` is left as initialized. Returns the number of tensors copied.
std::size_t load_prefixed(ParamStore& target, const ParamStore& source, std::string_view prefix = "encoder.");

}  // namespace ssldet
