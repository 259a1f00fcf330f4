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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "mmconf/diffcore.hpp"
#include "mmconf/random.hpp"
#include "mmconf/tensor.hpp"

namespace mmconf::testing {

inline std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

/// Tensor with entries uniform in [lo, hi).
inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(Rng& rng, int n, double lo = 0.2, double hi = 3.0) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd l(n);
  for (int i = 0; i < n; ++i) l(i) = rng.uniform(lo, hi);
  return q * l.asDiagonal() * q.transpose();
}

/// Stack of random SPD matrices as a [batch, n, n] tensor.
inline Tensor random_spd_tensor(Rng& rng, int batch, int n, double lo = 0.2, double hi = 3.0) {
  std::vector<Eigen::MatrixXd> mats;
  for (int b = 0; b < batch; ++b) mats.push_back(random_spd(rng, n, lo, hi));
  Tensor t(Shape{batch, n, n});
  for (int b = 0; b < batch; ++b) t.mat(b) = mats[static_cast<std::size_t>(b)];
  return t;
}

using Builder = std::function<diff::Var(diff::Graph&, std::span<const diff::Var>)>;

struct GradientComparison {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
};

/// Analytic gradients of a scalar builder versus central differences taken here,
/// independently of the library's own checker.
inline GradientComparison compare_gradients(const Builder& build, std::vector<Tensor> inputs,
                                            double step = 1e-6, double floor = 1e-6) {
  diff::Graph g;
  std::vector<diff::Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
  const diff::Var root = build(g, leaves);
  g.backward(root);

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    diff::Graph h;
    std::vector<diff::Var> vs;
    for (const Tensor& t : xs) vs.push_back(h.constant(t));
    return build(h, vs).item();
  };

  GradientComparison out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = leaves[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> plus = inputs;
      std::vector<Tensor> minus = inputs;
      plus[k][i] += step;
      minus[k][i] -= step;
      const double numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * step);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
      out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(a));
    }
  }
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mmconf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace mmconf::testing
