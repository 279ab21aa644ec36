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

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace mllc {

using Scalar = double;
using Index = Eigen::Index;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense tensor of rank 0, 1 or 2 stored in an Eigen matrix.
///
/// Rank 0 is held as 1x1, rank 1 as an n x 1 column. The logical layout
/// exposed through `to_row_major()` / `from_row_major()` is row-major,
/// matching the checkpoint format.
class Tensor {
 public:
  Tensor() : data_(Matrix::Zero(1, 1)) {}
  explicit Tensor(Scalar value) : data_(Matrix::Constant(1, 1, value)) {}

  static Tensor vector(const Vector& v);
  static Tensor matrix(const Matrix& m);
  static Tensor zeros(std::span<const std::size_t> shape);
  static Tensor zeros_like(const Tensor& t);
  static Tensor from_row_major(std::span<const std::size_t> shape, std::span<const Scalar> data);

  int rank() const noexcept { return rank_; }
  std::vector<std::size_t> shape() const;
  Index size() const noexcept { return data_.size(); }
  Index rows() const noexcept { return data_.rows(); }
  Index cols() const noexcept { return data_.cols(); }

  const Matrix& mat() const noexcept { return data_; }
  Matrix& mat() noexcept { return data_; }

  /// First coefficient as a column view; only meaningful for rank <= 1.
  Eigen::Map<const Vector> vec() const { return {data_.data(), data_.size()}; }

  /// Value of a single-element tensor.
  Scalar item() const;

  std::vector<Scalar> to_row_major() const;
  bool all_finite() const { return data_.allFinite(); }
  bool same_shape(const Tensor& other) const noexcept {
    return rank_ == other.rank_ && rows() == other.rows() && cols() == other.cols();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  Tensor(int rank, Matrix data) : rank_(rank), data_(std::move(data)) {}

  int rank_ = 0;
  Matrix data_;
};

}  // namespace mllc
