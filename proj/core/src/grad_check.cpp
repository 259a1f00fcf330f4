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

#include <algorithm>
#include <cmath>

#include "mmconf/diffcore.hpp"
#include "mmconf/error.hpp"

namespace mmconf::diff {
namespace {

double evaluate(const GraphBuilder& builder, std::span<const Tensor> inputs) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
  return builder(g, leaves).item();
}

}  // namespace

GradCheckReport grad_check(const GraphBuilder& builder, std::span<const Tensor> inputs,
                           double eps, double floor) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
  Var root = builder(g, leaves);
  g.backward(root);

  GradCheckReport report;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t leaf = 0; leaf < inputs.size(); ++leaf) {
    const Tensor& analytic = leaves[leaf].grad();
    double worst = 0.0;
    std::size_t worst_at = 0;
    for (std::size_t i = 0; i < inputs[leaf].size(); ++i) {
      const double x0 = probe[leaf][i];
      probe[leaf][i] = x0 + eps;
      const double up = evaluate(builder, probe);
      probe[leaf][i] = x0 - eps;
      const double down = evaluate(builder, probe);
      probe[leaf][i] = x0;
      const double numeric = (up - down) / (2.0 * eps);
      if (!std::isfinite(numeric)) {
        throw NumericError("grad_check: non-finite finite-difference estimate");
      }
      const double a = analytic[i];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (err > worst) {
        worst = err;
        worst_at = i;
      }
    }
    report.max_rel_error.push_back(worst);
    report.worst_index.push_back(worst_at);
    report.max_error = std::max(report.max_error, worst);
  }
  return report;
}

}  // namespace mmconf::diff
