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

#include "mmconf/diffcore.hpp"

#include <fmt/format.h>

#include "mmconf/error.hpp"

namespace mmconf::diff {

const Tensor& Var::value() const { return graph_->node(id_).value; }

const Tensor& Var::grad() const { return graph_->node(id_).grad; }

bool Var::requires_grad() const { return graph_->node(id_).requires_grad; }

Var Graph::leaf(Tensor value) {
  Node n;
  n.op = "leaf";
  n.grad = Tensor(value.shape());
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::check_owned(const Var& v) const {
  if (v.graph_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
    throw Error("variable does not belong to this graph");
  }
}

Var Graph::record(std::string op, std::vector<Var> inputs, Tensor value,
                  BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(fmt::format("{}: non-finite output", op));
  }
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v);
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || node(v.id_).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(Var root) {
  check_owned(root);
  if (root.value().size() != 1) {
    throw ShapeError(fmt::format("backward: root must be a scalar, got {}",
                                 root.shape().str()));
  }
  for (Node& n : nodes_) {
    if (!n.is_leaf) n.grad = Tensor();
  }
  Node& r = node(root.id_);
  if (!r.requires_grad) return;
  if (r.is_leaf) {
    r.grad[0] += 1.0;
    return;
  }
  r.grad = Tensor(r.value.shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (int id = root.id_; id >= 0; --id) {
    Node& n = node(id);
    if (n.is_leaf || !n.requires_grad || n.grad.empty()) continue;
    in_values.clear();
    in_grads.clear();
    for (int in : n.inputs) {
      Node& parent = node(in);
      in_values.push_back(&parent.value);
      if (parent.requires_grad) {
        if (parent.grad.empty()) parent.grad = Tensor(parent.value.shape());
        in_grads.push_back(&parent.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(n.grad, n.value, in_values, in_grads);
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) {
    if (n.is_leaf) {
      n.grad.fill(0.0);
    } else {
      n.grad = Tensor();
    }
  }
}

}  // namespace mmconf::diff
