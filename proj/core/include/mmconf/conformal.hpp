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

// Conformalized joint prediction: interval score, calibration and sharpness
// objectives, coverage tracking and interval-width metrics.
//
// Batches are row-major [N x D] matrices (N objects, D = 24 corner
// coordinates). Loss forms exist both as plain numbers and as graph
// builders so the training loss can be cross-checked against the reference.

#include <span>
#include <vector>

#include "mmconf/diffcore.hpp"
#include "mmconf/tensor.hpp"

namespace mmconf::conformal {

struct ConformalConfig {
  double p = 0.9;         // target marginal coverage
  double alpha_l = 0.05;  // lower quantile level
  double alpha_h = 0.95;  // upper quantile level

  /// Miscoverage used by the interval score: 1 - (alpha_h - alpha_l).
  [[nodiscard]] double alpha() const { return 1.0 - (alpha_h - alpha_l); }
  /// alpha_l = (1 - p) / 2, alpha_h = 1 - (1 - p) / 2.
  static ConformalConfig from_coverage(double p);
  /// Throws ConfigError unless 0 < alpha_l < alpha_h < 1 and
  /// alpha_h - alpha_l == p (to 1e-12).
  void validate() const;
};

/// Point predictions and bounds for a batch; each is [N x 24].
struct PredictionSet {
  RowMatrix y_hat;
  RowMatrix q_l;
  RowMatrix q_h;
};

struct CalibrationState {
  double p_cov_avg = 0.0;
  int batches_seen = 0;
  double coverage_sum = 0.0;
  double u_last = 0.0;
  double nmi_last = 0.0;

  /// Starts a new epoch: clears the running mean and sets p_cov_avg to
  /// `prior` until the first batch arrives.
  void reset(double prior);
};

using MatrixRef = Eigen::Ref<const RowMatrix>;

/// Mean over entries of (q_h - q_l) + 2/alpha (q_l - y)[y < q_l] + 2/alpha (y - q_h)[y > q_h].
double interval_score(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h,
                      double alpha);

/// Undercoverage branch (p_cov_avg < p): mean (y - Q)[y > Q] summed over
/// Q in {q_l, q_h}. Overcoverage branch (p_cov_avg > p): mean (Q - y)[y < Q]
/// summed over both bounds. Zero on a tie.
double cal_objective(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h,
                     double p_cov_avg, double p);

/// mean(q_h - q_l) when p > 0.5, mean(q_l - q_h) otherwise.
double sharp_objective(const MatrixRef& q_l, const MatrixRef& q_h, double p);

/// (1 - nmi) cal + nmi sharp
double comcal(double nmi, double cal, double sharp);

/// Fraction of entries with q_l <= y <= q_h.
double batch_coverage(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h);

/// Fraction of rows whose every entry is covered.
double joint_coverage(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h);

/// Folds one batch's coverage into the running per-epoch mean.
CalibrationState update_coverage(CalibrationState state, const MatrixRef& y,
                                 const MatrixRef& q_l, const MatrixRef& q_h);

/// Mean interval width over all entries.
double uncertainty_metric(const MatrixRef& q_l, const MatrixRef& q_h);

/// Mean over objects of each object's mean width. Throws Error when empty.
double mau(std::span<const std::vector<double>> per_object_widths);

// --- graph builders; y is treated as a constant ------------------------------

diff::Var interval_score(diff::Var y, diff::Var q_l, diff::Var q_h, double alpha);
diff::Var cal_objective(diff::Var y, diff::Var q_l, diff::Var q_h, double p_cov_avg, double p);
diff::Var sharp_objective(diff::Var q_l, diff::Var q_h, double p);
diff::Var comcal(double nmi, diff::Var cal, diff::Var sharp);
/// Variant with a differentiable mixing weight (single-element `nmi`).
diff::Var comcal(diff::Var nmi, diff::Var cal, diff::Var sharp);
diff::Var uncertainty_metric(diff::Var q_l, diff::Var q_h);

}  // namespace mmconf::conformal
