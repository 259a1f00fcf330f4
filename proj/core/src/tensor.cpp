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

#include "mmconf/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mmconf/error.hpp"

namespace mmconf {

std::string Shape::str() const {
  return fmt::format("[{}x{}x{}]", batch, rows, cols);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError(fmt::format("tensor of shape {} given {} values", shape_.str(),
                                 data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1, 1, 1}, value); }

Tensor Tensor::from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Tensor t(Shape{1, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  t.mat(0) = m;
  return t;
}

Tensor Tensor::stack(std::span<const Eigen::MatrixXd> matrices) {
  if (matrices.empty()) throw ShapeError("cannot stack an empty list of matrices");
  const auto rows = static_cast<int>(matrices.front().rows());
  const auto cols = static_cast<int>(matrices.front().cols());
  Tensor t(Shape{static_cast<int>(matrices.size()), rows, cols});
  for (std::size_t b = 0; b < matrices.size(); ++b) {
    if (matrices[b].rows() != rows || matrices[b].cols() != cols) {
      throw ShapeError(fmt::format("stack: element {} is {}x{}, expected {}x{}", b,
                                   matrices[b].rows(), matrices[b].cols(), rows, cols));
    }
    t.mat(static_cast<int>(b)) = matrices[b];
  }
  return t;
}

MatrixMap Tensor::mat(int b) {
  return MatrixMap(data_.data() + static_cast<std::size_t>(b) * shape_.matrix_size(),
                   shape_.rows, shape_.cols);
}

ConstMatrixMap Tensor::mat(int b) const {
  return ConstMatrixMap(data_.data() + static_cast<std::size_t>(b) * shape_.matrix_size(),
                        shape_.rows, shape_.cols);
}

Eigen::MatrixXd Tensor::matrix(int b) const { return mat(b); }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError(fmt::format("item() on tensor of shape {}", shape_.str()));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::accumulate(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError(fmt::format("accumulate: {} vs {}", shape_.str(), other.shape_.str()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

}  // namespace mmconf
