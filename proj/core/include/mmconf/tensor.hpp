// Copyright 2026 The mmconf Authors.
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

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmconf {

/// Shape of a batch of dense matrices. A plain matrix has batch == 1; a
/// column vector has cols == 1.
struct Shape {
  int batch = 1;
  int rows = 1;
  int cols = 1;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(batch) * rows * cols;
  }
  [[nodiscard]] std::size_t matrix_size() const {
    return static_cast<std::size_t>(rows) * cols;
  }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Contiguous row-major storage for `batch` matrices of size rows x cols.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  /// Wraps a single matrix (batch 1).
  static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);
  /// Stacks equally sized matrices into a batch.
  static Tensor stack(std::span<const Eigen::MatrixXd> matrices);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }
  [[nodiscard]] double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }

  [[nodiscard]] MatrixMap mat(int b = 0);
  [[nodiscard]] ConstMatrixMap mat(int b = 0) const;
  /// Copy of batch element `b` as a column-major Eigen matrix.
  [[nodiscard]] Eigen::MatrixXd matrix(int b = 0) const;

  double& operator()(int b, int r, int c) {
    return data_[(static_cast<std::size_t>(b) * shape_.rows + r) * shape_.cols + c];
  }
  double operator()(int b, int r, int c) const {
    return data_[(static_cast<std::size_t>(b) * shape_.rows + r) * shape_.cols + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Value of a single-element tensor.
  [[nodiscard]] double item() const;
  [[nodiscard]] bool all_finite() const;

  void fill(double v);
  /// this += other (shapes must match).
  void accumulate(const Tensor& other);

 private:
  Shape shape_{0, 0, 0};
  std::vector<double> data_;
};

}  // namespace mmconf
