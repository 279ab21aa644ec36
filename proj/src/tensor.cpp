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

#include "mllc/tensor.hpp"

#include "mllc/error.hpp"

#include <functional>
#include <numeric>
#include <string>

namespace mllc {

Tensor Tensor::vector(const Vector& v) {
  if (v.size() == 0) throw DimensionError("tensor dimensions must be positive");
  return Tensor(1, v);
}

Tensor Tensor::matrix(const Matrix& m) {
  if (m.size() == 0) throw DimensionError("tensor dimensions must be positive");
  return Tensor(2, m);
}

Tensor Tensor::zeros(std::span<const std::size_t> shape) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  switch (shape.size()) {
    case 0:
      return Tensor(0, Matrix::Zero(1, 1));
    case 1:
      return Tensor(1, Matrix::Zero(static_cast<Index>(shape[0]), 1));
    case 2:
      return Tensor(2, Matrix::Zero(static_cast<Index>(shape[0]), static_cast<Index>(shape[1])));
    default:
      throw DimensionError("tensor rank " + std::to_string(shape.size()) + " not supported");
  }
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.rank_, Matrix::Zero(t.rows(), t.cols())); }

Tensor Tensor::from_row_major(std::span<const std::size_t> shape, std::span<const Scalar> data) {
  Tensor t = zeros(shape);
  std::size_t expected =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (expected != data.size())
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape product " + std::to_string(expected));
  for (Index r = 0; r < t.rows(); ++r)
    for (Index c = 0; c < t.cols(); ++c) t.data_(r, c) = data[static_cast<std::size_t>(r * t.cols() + c)];
  return t;
}

std::vector<std::size_t> Tensor::shape() const {
  switch (rank_) {
    case 0:
      return {};
    case 1:
      return {static_cast<std::size_t>(rows())};
    default:
      return {static_cast<std::size_t>(rows()), static_cast<std::size_t>(cols())};
  }
}

Scalar Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() requires a single-element tensor");
  return data_(0, 0);
}

std::vector<Scalar> Tensor::to_row_major() const {
  std::vector<Scalar> out;
  out.reserve(static_cast<std::size_t>(data_.size()));
  for (Index r = 0; r < rows(); ++r)
    for (Index c = 0; c < cols(); ++c) out.push_back(data_(r, c));
  return out;
}

}  // namespace mllc
