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

#include "mllc/checkpoint.hpp"

#include "mllc/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mllc {
namespace {

static_assert(sizeof(double) == 8);

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(std::istream& in, const std::string& source) : in_(in), source_(source) {}

  std::uint64_t u64(const char* what) {
    unsigned char buf[8];
    if (!in_.read(reinterpret_cast<char*>(buf), 8)) fail(std::string("truncated while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64("tensor data")); }

  std::string bytes(std::uint64_t n, const char* what) {
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), static_cast<std::streamsize>(n))) fail(std::string("truncated while reading ") + what);
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, 0, what); }

 private:
  std::istream& in_;
  const std::string& source_;
};

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const NamedTensor> tensors) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    auto shape = t.shape();
    put_u64(out, shape.size());
    for (auto d : shape) put_u64(out, d);
    for (double v : t.to_row_major()) put_f64(out, v);
  }
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, tensors);
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(std::istream& in, const std::string& source) {
  Reader r(in, source);
  if (r.bytes(sizeof(kCheckpointMagic) - 1, "magic") != kCheckpointMagic) r.fail("bad magic, not an MLLC1 checkpoint");
  const std::uint64_t count = r.u64("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.u64("name length");
    if (name_len > (1u << 16)) r.fail("implausible tensor name length");
    NamedTensor nt;
    nt.name = r.bytes(name_len, "tensor name");
    const std::uint64_t rank = r.u64("rank");
    if (rank > 2) r.fail("tensor '" + nt.name + "' has unsupported rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    std::uint64_t total = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      std::uint64_t d = r.u64("dimension");
      if (d == 0 || d > (1ull << 32)) r.fail("tensor '" + nt.name + "' has invalid dimension");
      shape.push_back(static_cast<std::size_t>(d));
      total *= d;
    }
    std::vector<double> data(total);
    for (auto& v : data) v = r.f64();
    nt.tensor = Tensor::from_row_major(shape, data);
    if (!nt.tensor.all_finite()) r.fail("tensor '" + nt.name + "' holds non-finite values");
    out.push_back(std::move(nt));
  }
  return out;
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace mllc
