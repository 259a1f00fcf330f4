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

#include "mmconf/gaussfuse.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "mmconf/error.hpp"

namespace mmconf::gauss {
namespace {

double condition_estimate(const Mat4& v) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(0.5 * (v + v.transpose()), Eigen::EigenvaluesOnly);
  const Vec4 ev = es.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

bool meets_floor(const Mat4& v, double floor) {
  Eigen::LLT<Mat4> llt(v);
  if (llt.info() != Eigen::Success) return false;
  Eigen::SelfAdjointEigenSolver<Mat4> es(v, Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() >= floor;
}

}  // namespace

void LatentGaussian::validate() const {
  for (int i = 0; i < kLatentDim; ++i) {
    if (!(mu[i] >= 0.0 && mu[i] <= 2.0)) {
      throw Error(fmt::format("latent mean component {} = {} outside [0, 2]", i, mu[i]));
    }
    if (!(chol(i, i) >= kMinCholDiagonal)) {
      throw Error(fmt::format("Cholesky diagonal {} = {} below {}", i, chol(i, i),
                              kMinCholDiagonal));
    }
    for (int j = i + 1; j < kLatentDim; ++j) {
      if (chol(i, j) != 0.0) throw Error("Cholesky factor has a nonzero upper triangle");
    }
  }
}

Mat4 cov_from_chol(const Mat4& chol) {
  for (int i = 0; i < kLatentDim; ++i) {
    if (!(chol(i, i) > 0.0)) {
      throw NumericError(
          fmt::format("cov_from_chol: non-positive diagonal entry {} at {}", chol(i, i), i));
    }
  }
  const Mat4 l = chol.triangularView<Eigen::Lower>();
  return l * l.transpose();
}

PDRepairResult repair_pd(const Mat4& v, double floor) {
  const double asymmetry = (v - v.transpose()).cwiseAbs().maxCoeff();
  const Mat4 sym = asymmetry > 1e-8 ? Mat4(0.5 * (v + v.transpose())) : v;
  Eigen::SelfAdjointEigenSolver<Mat4> es(sym);
  if (es.info() != Eigen::Success) {
    throw NumericError("repair_pd: eigen decomposition did not converge");
  }
  PDRepairResult out;
  out.eigenvalues_before = es.eigenvalues();
  Vec4 clamped = out.eigenvalues_before;
  for (int i = 0; i < kLatentDim; ++i) {
    if (clamped[i] < floor) {
      clamped[i] = floor;
      ++out.clamped_count;
    }
  }
  if (out.clamped_count == 0) {
    out.matrix = sym;
    return out;
  }
  const Mat4& q = es.eigenvectors();
  const Mat4 rebuilt = q * clamped.asDiagonal() * q.transpose();
  out.matrix = 0.5 * (rebuilt + rebuilt.transpose());
  return out;
}

Mat4 invert_pd(const Mat4& v, bool* repaired) {
  if (repaired) *repaired = false;
  const Mat4 sym = 0.5 * (v + v.transpose());
  Eigen::LLT<Mat4> llt(sym);
  if (llt.info() != Eigen::Success) {
    if (repaired) *repaired = true;
    llt.compute(repair_pd(sym).matrix);
    if (llt.info() != Eigen::Success) {
      throw NumericError(fmt::format(
          "invert_pd: inversion failed after repair (condition estimate {:.3g})",
          condition_estimate(v)));
    }
  }
  const Mat4 inv = llt.solve(Mat4::Identity());
  return 0.5 * (inv + inv.transpose());
}

ProductResult gaussian_product(std::span<const GaussianParams> factors) {
  if (factors.size() < 2) {
    throw Error(fmt::format("gaussian_product: need at least two factors, got {}",
                            factors.size()));
  }
  ProductResult out;
  Mat4 precision = Mat4::Zero();
  Vec4 info = Vec4::Zero();
  for (const GaussianParams& f : factors) {
    bool rep = false;
    const Mat4 p = invert_pd(f.cov, &rep);
    out.repaired = out.repaired || rep;
    precision += p;
    info += p * f.mu;
  }
  bool rep = false;
  out.v_joint = invert_pd(precision, &rep);
  out.repaired = out.repaired || rep;
  if (!meets_floor(out.v_joint, kEigenFloor)) {
    out.v_joint = repair_pd(out.v_joint).matrix;
    out.repaired = true;
  }
  out.mu_joint = out.v_joint * info;
  return out;
}

Vec4 reparam_sample(const Vec4& mu, const Mat4& v, const Vec4& eps) {
  Eigen::LLT<Mat4> llt(0.5 * (v + v.transpose()));
  if (llt.info() != Eigen::Success) {
    llt.compute(repair_pd(v).matrix);
    if (llt.info() != Eigen::Success) {
      throw NumericError("reparam_sample: Cholesky failed after repair");
    }
  }
  return mu + llt.matrixL() * eps;
}

// --- differentiable ------------------------------------------------------------

diff::Var cov_from_chol(diff::Var chol) {
  return diff::matmul(chol, diff::transpose(chol));
}

diff::Var repair_gate(diff::Var v, double floor, int* repaired_count) {
  const Shape s = v.shape();
  if (s.rows != kLatentDim || s.cols != kLatentDim) {
    throw ShapeError(fmt::format("repair_gate: expected [B x 4 x 4], got {}", s.str()));
  }
  Tensor out = v.value();
  std::vector<char> repaired(static_cast<std::size_t>(s.batch), 0);
  int count = 0;
  for (int k = 0; k < s.batch; ++k) {
    const Mat4 m = v.value().mat(k);
    const Mat4 sym = 0.5 * (m + m.transpose());
    if (!meets_floor(sym, floor)) {
      out.mat(k) = repair_pd(sym, floor).matrix;
      repaired[static_cast<std::size_t>(k)] = 1;
      ++count;
    }
  }
  if (repaired_count) *repaired_count = count;
  if (count == 0) return v;
  return v.graph().record(
      "repair_gate", {v}, std::move(out),
      [repaired](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                 std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (int k = 0; k < g.shape().batch; ++k) {
          if (repaired[static_cast<std::size_t>(k)]) continue;
          grads[0]->mat(k) += g.mat(k);
        }
      });
}

FusedVars gaussian_product(std::span<const diff::Var> mus, std::span<const diff::Var> covs) {
  if (mus.size() != covs.size() || mus.size() < 2) {
    throw Error(fmt::format("gaussian_product: need matching lists of at least two factors "
                            "(got {} means, {} covariances)",
                            mus.size(), covs.size()));
  }
  FusedVars out;
  diff::Var precision;
  diff::Var info;
  for (std::size_t i = 0; i < mus.size(); ++i) {
    int rep = 0;
    const diff::Var p = diff::spd_inverse(repair_gate(covs[i], kEigenFloor, &rep));
    out.repaired += rep;
    const diff::Var pm = diff::matmul(p, mus[i]);
    precision = precision.valid() ? diff::add(precision, p) : p;
    info = info.valid() ? diff::add(info, pm) : pm;
  }
  int rep = 0;
  out.v_joint = diff::spd_inverse(repair_gate(precision, kEigenFloor, &rep));
  out.repaired += rep;
  out.v_joint = repair_gate(out.v_joint, kEigenFloor, &rep);
  out.repaired += rep;
  out.mu_joint = diff::matmul(out.v_joint, info);
  return out;
}

diff::Var reparam_sample(diff::Var mu, diff::Var v, diff::Var eps, int* repaired_count) {
  const diff::Var l = diff::cholesky(repair_gate(v, kEigenFloor, repaired_count));
  return diff::add(mu, diff::matmul(l, eps));
}

}  // namespace mmconf::gauss
