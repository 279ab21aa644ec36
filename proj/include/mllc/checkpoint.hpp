// Copyright 2026 The mllc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mllc/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mllc {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Binary checkpoint container.
///
///   "MLLC1" | u64 count | count x { u64 name_len | name bytes | u64 rank |
///   rank x u64 dim | prod(dims) x f64 (row-major) }
///
/// All integers and reals are little-endian.
inline constexpr char kCheckpointMagic[] = "MLLC1";

void write_checkpoint(std::ostream& out, std::span<const NamedTensor> tensors);
void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in, const std::string& source = "<stream>");
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace mllc
