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

#include "mmconf/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "mmconf/error.hpp"

namespace mmconf::info {
namespace {

constexpr int kDim = 4;

double positive_det(const Eigen::Matrix4d& v, const char* what) {
  const double d = v.determinant();
  if (!(d > 0.0)) {
    throw NumericError(fmt::format("{}: non-positive determinant {}", what, d));
  }
  return d;
}

// log2((2 pi e)^4)
const double kEntropyOffsetBits = kDim * std::log2(2.0 * std::numbers::pi * std::numbers::e);

}  // namespace

double mutual_information(const Eigen::Matrix4d& v_a, const Eigen::Matrix4d& v_b,
                          const Eigen::Matrix4d& v_joint) {
  const double da = positive_det(v_a, "mutual_information");
  const double db = positive_det(v_b, "mutual_information");
  const double dj = positive_det(v_joint, "mutual_information");
  return 0.5 * (std::log2(da) + std::log2(db) - std::log2(dj));
}

double entropy(const Eigen::Matrix4d& v) {
  return 0.5 * (kEntropyOffsetBits + std::log2(positive_det(v, "entropy")));
}

NmiValue nmi(double mi, double h_a, double h_b) {
  const double denom = h_a + h_b;
  if (denom == 0.0) throw NumericError("nmi: entropies sum to zero");
  NmiValue out;
  out.raw = 2.0 * mi / denom;
  out.value = std::clamp(out.raw, 0.0, 1.0);
  out.clamped = out.value != out.raw;
  return out;
}

InfoReport analyze(const Eigen::Matrix4d& v_a, const Eigen::Matrix4d& v_b,
                   const Eigen::Matrix4d& v_joint) {
  InfoReport r;
  r.mi_bits = mutual_information(v_a, v_b, v_joint);
  r.h_a_bits = entropy(v_a);
  r.h_b_bits = entropy(v_b);
  const NmiValue n = nmi(r.mi_bits, r.h_a_bits, r.h_b_bits);
  r.nmi = n.value;
  r.clamped = n.clamped;
  r.raw_nmi = n.raw;
  return r;
}

diff::Var mutual_information(diff::Var v_a, diff::Var v_b, diff::Var v_joint) {
  const diff::Var ratio =
      diff::div(diff::mul(diff::det(v_a), diff::det(v_b)), diff::det(v_joint));
  return diff::scale(diff::log2(ratio), 0.5);
}

diff::Var entropy(diff::Var v) {
  return diff::scale(diff::add_scalar(diff::log2(diff::det(v)), kEntropyOffsetBits), 0.5);
}

diff::Var nmi(diff::Var mi, diff::Var h_a, diff::Var h_b) {
  for (std::size_t i = 0; i < h_a.value().size(); ++i) {
    if (h_a.value()[i] + h_b.value()[i] == 0.0) {
      throw NumericError("nmi: entropies sum to zero");
    }
  }
  return diff::clamp(diff::div(diff::scale(mi, 2.0), diff::add(h_a, h_b)), 0.0, 1.0);
}

}  // namespace mmconf::info
