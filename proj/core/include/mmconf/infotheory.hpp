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

// Gaussian information quantities computed from covariance determinants.
// Mutual information and entropies are in bits.

#include <Eigen/Dense>

#include "mmconf/diffcore.hpp"

namespace mmconf::info {

struct InfoReport {
  double mi_bits = 0.0;
  double h_a_bits = 0.0;
  double h_b_bits = 0.0;
  double nmi = 0.0;
  bool clamped = false;
  /// 2 MI / (H_a + H_b) before clamping to [0, 1].
  double raw_nmi = 0.0;
};

struct NmiValue {
  double value = 0.0;
  bool clamped = false;
  double raw = 0.0;
};

/// 1/2 log2(|v_a| |v_b| / |v_joint|)
double mutual_information(const Eigen::Matrix4d& v_a, const Eigen::Matrix4d& v_b,
                          const Eigen::Matrix4d& v_joint);

/// 1/2 log2((2 pi e)^4 |v|)
double entropy(const Eigen::Matrix4d& v);

/// clamp(2 mi / (h_a + h_b), 0, 1)
NmiValue nmi(double mi, double h_a, double h_b);

InfoReport analyze(const Eigen::Matrix4d& v_a, const Eigen::Matrix4d& v_b,
                   const Eigen::Matrix4d& v_joint);

// Differentiable forms over [B, 4, 4] batches; each returns [B, 1, 1].
diff::Var mutual_information(diff::Var v_a, diff::Var v_b, diff::Var v_joint);
diff::Var entropy(diff::Var v);
diff::Var nmi(diff::Var mi, diff::Var h_a, diff::Var h_b);

}  // namespace mmconf::info
