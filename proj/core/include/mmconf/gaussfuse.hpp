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

// Per-modality latent Gaussians, their fusion by Gaussian product, and the
// positive-definite repair path. Every operation comes in two flavours: a
// plain numeric one on fixed 4x4 Eigen types, and a differentiable one that
// records onto a diff::Graph over batches of [B, 4, 4] matrices.

#include <span>

#include <Eigen/Dense>

#include "mmconf/diffcore.hpp"

namespace mmconf::gauss {

inline constexpr int kLatentDim = 4;
/// Added to every per-modality covariance before it is inverted.
inline constexpr double kIdentityRegularization = 1e-4;
/// Eigenvalue floor used when repairing a covariance.
inline constexpr double kEigenFloor = 1e-6;
/// Lower bound on the Cholesky diagonal emitted by the encoders.
inline constexpr double kMinCholDiagonal = 1e-3;

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

struct LatentGaussian {
  Vec4 mu = Vec4::Ones();
  Mat4 chol = Mat4::Identity();

  /// Throws Error if mu leaves [0, 2], the upper triangle is nonzero or the
  /// diagonal drops below kMinCholDiagonal.
  void validate() const;
};

struct GaussianParams {
  Vec4 mu;
  Mat4 cov;
};

struct ProductResult {
  Vec4 mu_joint;
  Mat4 v_joint;
  bool repaired = false;
};

/// Fused latent posterior with its information diagnostics (bits).
struct FusedPosterior {
  Vec4 mu_joint;
  Mat4 v_joint;
  double h_a = 0.0;
  double h_b = 0.0;
  double mi = 0.0;
  double nmi = 0.0;
  bool repaired = false;
};

struct PDRepairResult {
  Mat4 matrix;
  int clamped_count = 0;
  Vec4 eigenvalues_before;
};

/// L L^T. Throws NumericError on a non-positive diagonal entry.
Mat4 cov_from_chol(const Mat4& chol);

/// Eigen-decomposes v = Q diag(l) Q^T and raises eigenvalues below `floor`
/// to `floor`. Matrices already satisfying the floor are returned unchanged.
PDRepairResult repair_pd(const Mat4& v, double floor = kEigenFloor);

/// Inverse through a Cholesky solve; when the factorization fails the
/// matrix is repaired first. `repaired` is set when that happened.
Mat4 invert_pd(const Mat4& v, bool* repaired = nullptr);

/// Product of Gaussian densities: V^-1 = sum V_i^-1, mu = V sum V_i^-1 mu_i.
/// Requires at least two factors.
ProductResult gaussian_product(std::span<const GaussianParams> factors);

/// mu + chol(v) eps, repairing v if it cannot be factored.
Vec4 reparam_sample(const Vec4& mu, const Mat4& v, const Vec4& eps);

// --- differentiable counterparts over [B, 4, 4] batches ---------------------

/// L L^T for a batch of lower-triangular factors.
diff::Var cov_from_chol(diff::Var chol);

/// Passes batch elements through unchanged when they factor and meet the
/// eigenvalue floor; otherwise substitutes the repaired matrix and blocks the
/// gradient for that element. `repaired_count` receives the number of
/// substituted elements.
diff::Var repair_gate(diff::Var v, double floor = kEigenFloor, int* repaired_count = nullptr);

struct FusedVars {
  diff::Var mu_joint;   // [B, 4, 1]
  diff::Var v_joint;    // [B, 4, 4]
  int repaired = 0;
};

/// Batched Gaussian product; `mus[i]` is [B, 4, 1], `covs[i]` is [B, 4, 4].
FusedVars gaussian_product(std::span<const diff::Var> mus, std::span<const diff::Var> covs);

/// mu + chol(v) eps for [B, 4, 1] mu/eps and [B, 4, 4] v.
diff::Var reparam_sample(diff::Var mu, diff::Var v, diff::Var eps, int* repaired_count = nullptr);

}  // namespace mmconf::gauss
