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

// Reverse-mode automatic differentiation over batches of small dense
// matrices. Graphs are built eagerly: every operation computes its value when
// it is recorded, and Graph::backward() walks the tape in reverse.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmconf/tensor.hpp"

namespace mmconf::diff {

class Graph;

/// Handle to a node on a Graph tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Tensor& value() const;
  /// Gradient accumulated by backward(). Empty for constants.
  [[nodiscard]] const Tensor& grad() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] double item() const { return value().item(); }
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool valid() const { return graph_ != nullptr; }
  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] int id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Local backward rule of a recorded operation. `in_grads[i]` is null when
/// input i does not require a gradient; otherwise the rule adds its
/// contribution to it.
using BackwardFn = std::function<void(const Tensor& out_grad, const Tensor& out_value,
                                      std::span<const Tensor* const> in_values,
                                      std::span<Tensor* const> in_grads)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable input. Its gradient accumulates across backward() calls
  /// until zero_grad().
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);
  Var scalar(double value) { return constant(Tensor::scalar(value)); }

  /// Records an operation with an already computed value. Throws
  /// NumericError naming `op` if the value is not finite.
  Var record(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  /// Back-propagates d(root)/d(node) to every node. Root must hold a single
  /// element. Intermediate gradients are recomputed on every call; leaf
  /// gradients accumulate.
  void backward(Var root);
  void zero_grad();

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
};

// --- elementwise -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// x * s where s holds a single element.
Var mul_scalar(Var x, Var s);
Var exp(Var a);
Var log(Var a);
Var log2(Var a);
/// x / (1 + |x|)
Var softsign(Var a);
/// log(1 + e^x), computed without overflow.
Var softplus(Var a);
Var leaky_relu(Var a, double slope);
/// Huber-style loss of a residual: 0.5 d^2 / beta if |d| < beta, else |d| - 0.5 beta.
Var smooth_l1(Var residual, double beta = 1.0);
/// x * mask with mask a constant 0/1 tensor: the indicator contributes no
/// gradient of its own.
Var gate(Var x, const Tensor& mask);
/// Clamps to [lo, hi]; gradient is zero where clamped.
Var clamp(Var a, double lo, double hi);

// --- reductions and reshaping ----------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// Concatenates along columns; batch and rows must match.
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, int start, int count);
/// [1, N, k] -> [N, k, 1]: one column vector per row.
Var rows_to_batch(Var a);
/// [N, k, 1] -> [1, N, k]
Var batch_to_rows(Var a);
/// [B, n(n+1)/2, 1] -> [B, n, n] lower-triangular. The first n entries fill
/// the diagonal, the rest fill the strict lower triangle row by row.
Var tril_fill(Var packed, int n);

// --- linear algebra (per batch element) ------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var trace(Var a);
/// a + diag_value * I
Var add_identity(Var a, double diag_value);
/// (a + a^T) / 2
Var symmetrize(Var a);
/// General inverse via partial-pivot LU.
Var inverse(Var a);
/// Inverse of the symmetric part of `a` through a Cholesky solve; the
/// result is exactly symmetric. Throws NumericError if not positive definite.
Var spd_inverse(Var a);
Var det(Var a);
/// log|det(a)|; throws NumericError when det(a) <= 0.
Var logdet(Var a);
/// Lower Cholesky factor of the symmetric part of `a`.
Var cholesky(Var a);
/// x [1, N, in] * w [1, in, out] + b [1, 1, out] broadcast over rows.
Var affine(Var x, Var w, Var b);

// --- gradient checking -------------------------------------------------------

using GraphBuilder = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one entry per leaf
  double max_error = 0.0;
  std::vector<std::size_t> worst_index;  // flat element index of the worst entry per leaf
};

/// Compares the analytic gradient of `builder` at `inputs` against central
/// differences with step `eps`. Relative error per element is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport grad_check(const GraphBuilder& builder, std::span<const Tensor> inputs,
                           double eps = 1e-5, double floor = 1e-6);

}  // namespace mmconf::diff
