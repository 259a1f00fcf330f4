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

#include "mmconf/conformal.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mmconf/error.hpp"

namespace mmconf::conformal {
namespace {

void require_same(const char* op, const MatrixRef& a, const MatrixRef& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(fmt::format("{}: shape mismatch [{}x{}] vs [{}x{}]", op, a.rows(),
                                 a.cols(), b.rows(), b.cols()));
  }
}

void require_nonempty(const char* op, const MatrixRef& a) {
  if (a.size() == 0) throw ShapeError(fmt::format("{}: empty batch", op));
}

// Mask with 1 where pred(a[i], b[i]) holds.
template <class Pred>
Tensor mask_of(const Tensor& a, const Tensor& b, Pred pred) {
  Tensor m(a.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = pred(a[i], b[i]) ? 1.0 : 0.0;
  return m;
}

}  // namespace

ConformalConfig ConformalConfig::from_coverage(double p) {
  ConformalConfig c;
  c.p = p;
  c.alpha_l = (1.0 - p) / 2.0;
  c.alpha_h = 1.0 - (1.0 - p) / 2.0;
  c.validate();
  return c;
}

void ConformalConfig::validate() const {
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigError(fmt::format("coverage p must lie in (0, 1), got {}", p));
  }
  if (!(alpha_l > 0.0 && alpha_l < alpha_h && alpha_h < 1.0)) {
    throw ConfigError(fmt::format("need 0 < alpha_l < alpha_h < 1, got {} and {}", alpha_l,
                                  alpha_h));
  }
  if (std::abs((alpha_h - alpha_l) - p) > 1e-12) {
    throw ConfigError(
        fmt::format("alpha_h - alpha_l = {} does not equal p = {}", alpha_h - alpha_l, p));
  }
}

void CalibrationState::reset(double prior) {
  p_cov_avg = prior;
  batches_seen = 0;
  coverage_sum = 0.0;
}

double interval_score(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h,
                      double alpha) {
  require_same("interval_score", y, q_l);
  require_same("interval_score", y, q_h);
  require_nonempty("interval_score", y);
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(fmt::format("interval_score: alpha must lie in (0, 1), got {}", alpha));
  }
  const double k = 2.0 / alpha;
  double total = 0.0;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      const double yy = y(r, c);
      const double lo = q_l(r, c);
      const double hi = q_h(r, c);
      total += hi - lo;
      if (yy < lo) total += k * (lo - yy);
      if (yy > hi) total += k * (yy - hi);
    }
  }
  return total / static_cast<double>(y.size());
}

double cal_objective(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h,
                     double p_cov_avg, double p) {
  require_same("cal_objective", y, q_l);
  require_same("cal_objective", y, q_h);
  require_nonempty("cal_objective", y);
  const auto n = static_cast<double>(y.size());
  if (p_cov_avg < p) {
    const double lower = (y - q_l).cwiseMax(0.0).sum() / n;
    const double upper = (y - q_h).cwiseMax(0.0).sum() / n;
    return lower + upper;
  }
  if (p_cov_avg > p) {
    const double lower = (q_l - y).cwiseMax(0.0).sum() / n;
    const double upper = (q_h - y).cwiseMax(0.0).sum() / n;
    return lower + upper;
  }
  return 0.0;
}

double sharp_objective(const MatrixRef& q_l, const MatrixRef& q_h, double p) {
  require_same("sharp_objective", q_l, q_h);
  require_nonempty("sharp_objective", q_l);
  const double width = (q_h - q_l).mean();
  return p > 0.5 ? width : -width;
}

double comcal(double nmi, double cal, double sharp) {
  return (1.0 - nmi) * cal + nmi * sharp;
}

double batch_coverage(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h) {
  require_same("batch_coverage", y, q_l);
  require_same("batch_coverage", y, q_h);
  require_nonempty("batch_coverage", y);
  const auto covered = ((y.array() >= q_l.array()) && (y.array() <= q_h.array())).count();
  return static_cast<double>(covered) / static_cast<double>(y.size());
}

double joint_coverage(const MatrixRef& y, const MatrixRef& q_l, const MatrixRef& q_h) {
  require_same("joint_coverage", y, q_l);
  require_same("joint_coverage", y, q_h);
  require_nonempty("joint_coverage", y);
  Eigen::Index rows_covered = 0;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const bool all = ((y.row(r).array() >= q_l.row(r).array()) &&
                      (y.row(r).array() <= q_h.row(r).array()))
                         .all();
    rows_covered += all ? 1 : 0;
  }
  return static_cast<double>(rows_covered) / static_cast<double>(y.rows());
}

CalibrationState update_coverage(CalibrationState state, const MatrixRef& y,
                                 const MatrixRef& q_l, const MatrixRef& q_h) {
  state.coverage_sum += batch_coverage(y, q_l, q_h);
  state.batches_seen += 1;
  state.p_cov_avg = state.coverage_sum / state.batches_seen;
  return state;
}

double uncertainty_metric(const MatrixRef& q_l, const MatrixRef& q_h) {
  require_same("uncertainty_metric", q_l, q_h);
  require_nonempty("uncertainty_metric", q_l);
  return (q_h - q_l).mean();
}

double mau(std::span<const std::vector<double>> per_object_widths) {
  if (per_object_widths.empty()) throw Error("mau: no objects");
  double total = 0.0;
  for (const auto& widths : per_object_widths) {
    if (widths.empty()) throw Error("mau: object with no widths");
    double s = 0.0;
    for (double w : widths) s += w;
    total += s / static_cast<double>(widths.size());
  }
  return total / static_cast<double>(per_object_widths.size());
}

// --- graph builders ------------------------------------------------------------

diff::Var interval_score(diff::Var y, diff::Var q_l, diff::Var q_h, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(fmt::format("interval_score: alpha must lie in (0, 1), got {}", alpha));
  }
  const double k = 2.0 / alpha;
  const Tensor below = mask_of(y.value(), q_l.value(), [](double a, double b) { return a < b; });
  const Tensor above = mask_of(y.value(), q_h.value(), [](double a, double b) { return a > b; });
  diff::Var width = diff::sub(q_h, q_l);
  diff::Var under = diff::scale(diff::gate(diff::sub(q_l, y), below), k);
  diff::Var over = diff::scale(diff::gate(diff::sub(y, q_h), above), k);
  return diff::mean(diff::add(width, diff::add(under, over)));
}

diff::Var cal_objective(diff::Var y, diff::Var q_l, diff::Var q_h, double p_cov_avg, double p) {
  const auto greater = [](double a, double b) { return a > b; };
  const auto less = [](double a, double b) { return a < b; };
  if (p_cov_avg < p) {
    diff::Var lower = diff::mean(diff::gate(diff::sub(y, q_l), mask_of(y.value(), q_l.value(), greater)));
    diff::Var upper = diff::mean(diff::gate(diff::sub(y, q_h), mask_of(y.value(), q_h.value(), greater)));
    return diff::add(lower, upper);
  }
  if (p_cov_avg > p) {
    diff::Var lower = diff::mean(diff::gate(diff::sub(q_l, y), mask_of(y.value(), q_l.value(), less)));
    diff::Var upper = diff::mean(diff::gate(diff::sub(q_h, y), mask_of(y.value(), q_h.value(), less)));
    return diff::add(lower, upper);
  }
  return y.graph().scalar(0.0);
}

diff::Var sharp_objective(diff::Var q_l, diff::Var q_h, double p) {
  return p > 0.5 ? diff::mean(diff::sub(q_h, q_l)) : diff::mean(diff::sub(q_l, q_h));
}

diff::Var comcal(double nmi, diff::Var cal, diff::Var sharp) {
  return diff::add(diff::scale(cal, 1.0 - nmi), diff::scale(sharp, nmi));
}

diff::Var comcal(diff::Var nmi, diff::Var cal, diff::Var sharp) {
  const diff::Var one_minus = diff::add_scalar(diff::neg(nmi), 1.0);
  return diff::add(diff::mul_scalar(cal, one_minus), diff::mul_scalar(sharp, nmi));
}

diff::Var uncertainty_metric(diff::Var q_l, diff::Var q_h) {
  return diff::mean(diff::sub(q_h, q_l));
}

}  // namespace mmconf::conformal
