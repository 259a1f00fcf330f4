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
#include <numbers>

#include <fmt/format.h>

#include "mmconf/diffcore.hpp"
#include "mmconf/error.hpp"

namespace mmconf::diff {
namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape().str(),
                                 b.shape().str()));
  }
}

void require_square(const char* op, const Var& a) {
  if (a.shape().rows != a.shape().cols) {
    throw ShapeError(fmt::format("{}: expected square matrices, got {}", op, a.shape().str()));
  }
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx at one element.
template <class F, class D>
Var unary(const char* op, Var a, F f, D deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.graph().record(
      op, {a}, std::move(y),
      [deriv](const Tensor& g, const Tensor& out, std::span<const Tensor* const> in,
              std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const Tensor& xv = *in[0];
        Tensor& gx = *grads[0];
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * deriv(xv[i], out[i]);
      });
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// --- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return a.graph().record("add", {a, b}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            for (Tensor* gi : grads) {
                              if (gi) gi->accumulate(g);
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return a.graph().record("sub", {a, b}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (grads[0]) grads[0]->accumulate(g);
                            if (grads[1]) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
                            }
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return a.graph().record("mul", {a, b}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              if (grads[0]) (*grads[0])[i] += g[i] * (*in[1])[i];
                              if (grads[1]) (*grads[1])[i] += g[i] * (*in[0])[i];
                            }
                          });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] / b.value()[i];
  return a.graph().record("div", {a, b}, std::move(y),
                          [](const Tensor& g, const Tensor& out,
                             std::span<const Tensor* const> in, std::span<Tensor* const> grads) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              const double den = (*in[1])[i];
                              if (grads[0]) (*grads[0])[i] += g[i] / den;
                              if (grads[1]) (*grads[1])[i] -= g[i] * out[i] / den;
                            }
                          });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var mul_scalar(Var x, Var s) {
  if (s.value().size() != 1) {
    throw ShapeError(fmt::format("mul_scalar: scale must be a single element, got {}",
                                 s.shape().str()));
  }
  const double sv = s.item();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * sv;
  return x.graph().record("mul_scalar", {x, s}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
                            const double scale_value = (*in[1])[0];
                            double acc = 0.0;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              if (grads[0]) (*grads[0])[i] += g[i] * scale_value;
                              acc += g[i] * (*in[0])[i];
                            }
                            if (grads[1]) (*grads[1])[0] += acc;
                          });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError(fmt::format("log: non-positive argument {}", v));
  }
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var log2(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError(fmt::format("log2: non-positive argument {}", v));
  }
  return unary(
      "log2", a, [](double x) { return std::log2(x); },
      [](double x, double) { return 1.0 / (x * std::numbers::ln2); });
}

Var softsign(Var a) {
  return unary(
      "softsign", a, [](double x) { return x / (1.0 + std::abs(x)); },
      [](double x, double) {
        const double d = 1.0 + std::abs(x);
        return 1.0 / (d * d);
      });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, stable_softplus, [](double x, double) { return sigmoid(x); });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var smooth_l1(Var residual, double beta) {
  if (!(beta > 0.0)) throw Error("smooth_l1: beta must be positive");
  return unary(
      "smooth_l1", residual,
      [beta](double d) {
        const double ad = std::abs(d);
        return ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
      },
      [beta](double d, double) {
        if (std::abs(d) < beta) return d / beta;
        return d > 0.0 ? 1.0 : -1.0;
      });
}

Var gate(Var x, const Tensor& mask) {
  if (mask.shape() != x.shape()) {
    throw ShapeError(fmt::format("gate: shape mismatch {} vs {}", x.shape().str(),
                                 mask.shape().str()));
  }
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * mask[i];
  return x.graph().record("gate", {x}, std::move(y),
                          [mask](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                                 std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              (*grads[0])[i] += g[i] * mask[i];
                            }
                          });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

// --- reductions and reshaping ---------------------------------------------------

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().record("sum", {a}, Tensor::scalar(s),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (double& v : grads[0]->values()) v += g[0];
                          });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0.0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().record("mean", {a}, Tensor::scalar(s / n),
                          [n](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                              std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (double& v : grads[0]->values()) v += g[0] / n;
                          });
}

Var concat_cols(Var a, Var b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.batch != sb.batch || sa.rows != sb.rows) {
    throw ShapeError(fmt::format("concat_cols: shape mismatch {} vs {}", sa.str(), sb.str()));
  }
  Tensor y(Shape{sa.batch, sa.rows, sa.cols + sb.cols});
  for (int k = 0; k < sa.batch; ++k) {
    y.mat(k).leftCols(sa.cols) = a.value().mat(k);
    y.mat(k).rightCols(sb.cols) = b.value().mat(k);
  }
  return a.graph().record(
      "concat_cols", {a, b}, std::move(y),
      [ca = sa.cols, cb = sb.cols](const Tensor& g, const Tensor&,
                                   std::span<const Tensor* const>,
                                   std::span<Tensor* const> grads) {
        for (int k = 0; k < g.shape().batch; ++k) {
          if (grads[0]) grads[0]->mat(k) += g.mat(k).leftCols(ca);
          if (grads[1]) grads[1]->mat(k) += g.mat(k).rightCols(cb);
        }
      });
}

Var slice_cols(Var a, int start, int count) {
  const Shape s = a.shape();
  if (start < 0 || count <= 0 || start + count > s.cols) {
    throw ShapeError(
        fmt::format("slice_cols: columns [{}, {}) out of range for {}", start, start + count,
                    s.str()));
  }
  Tensor y(Shape{s.batch, s.rows, count});
  for (int k = 0; k < s.batch; ++k) y.mat(k) = a.value().mat(k).middleCols(start, count);
  return a.graph().record("slice_cols", {a}, std::move(y),
                          [start, count](const Tensor& g, const Tensor&,
                                         std::span<const Tensor* const>,
                                         std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              grads[0]->mat(k).middleCols(start, count) += g.mat(k);
                            }
                          });
}

namespace {

// Same storage, new shape.
Var reshape(const char* op, Var a, Shape to) {
  if (to.size() != a.value().size()) {
    throw ShapeError(fmt::format("{}: cannot view {} as {}", op, a.shape().str(), to.str()));
  }
  std::vector<double> values(a.value().values().begin(), a.value().values().end());
  return a.graph().record(op, {a}, Tensor(to, std::move(values)),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                          });
}

}  // namespace

Var rows_to_batch(Var a) {
  const Shape s = a.shape();
  if (s.batch != 1) {
    throw ShapeError(fmt::format("rows_to_batch: expected batch 1, got {}", s.str()));
  }
  return reshape("rows_to_batch", a, Shape{s.rows, s.cols, 1});
}

Var batch_to_rows(Var a) {
  const Shape s = a.shape();
  if (s.cols != 1) {
    throw ShapeError(fmt::format("batch_to_rows: expected column vectors, got {}", s.str()));
  }
  return reshape("batch_to_rows", a, Shape{1, s.batch, s.rows});
}

Var tril_fill(Var packed, int n) {
  const Shape s = packed.shape();
  if (s.cols != 1 || s.rows != n * (n + 1) / 2) {
    throw ShapeError(fmt::format("tril_fill: expected [B x {} x 1], got {}", n * (n + 1) / 2,
                                 s.str()));
  }
  // index map: packed position -> (row, col)
  std::vector<std::pair<int, int>> where;
  for (int i = 0; i < n; ++i) where.emplace_back(i, i);
  for (int r = 1; r < n; ++r) {
    for (int c = 0; c < r; ++c) where.emplace_back(r, c);
  }
  Tensor y(Shape{s.batch, n, n});
  for (int k = 0; k < s.batch; ++k) {
    for (std::size_t p = 0; p < where.size(); ++p) {
      y(k, where[p].first, where[p].second) = packed.value()(k, static_cast<int>(p), 0);
    }
  }
  return packed.graph().record("tril_fill", {packed}, std::move(y),
                               [where](const Tensor& g, const Tensor&,
                                       std::span<const Tensor* const>,
                                       std::span<Tensor* const> grads) {
                                 if (!grads[0]) return;
                                 for (int k = 0; k < g.shape().batch; ++k) {
                                   for (std::size_t p = 0; p < where.size(); ++p) {
                                     (*grads[0])(k, static_cast<int>(p), 0) +=
                                         g(k, where[p].first, where[p].second);
                                   }
                                 }
                               });
}

// --- linear algebra --------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.batch != sb.batch || sa.cols != sb.rows) {
    throw ShapeError(fmt::format("matmul: shape mismatch {} vs {}", sa.str(), sb.str()));
  }
  Tensor y(Shape{sa.batch, sa.rows, sb.cols});
  for (int k = 0; k < sa.batch; ++k) y.mat(k).noalias() = a.value().mat(k) * b.value().mat(k);
  return a.graph().record("matmul", {a, b}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
                            for (int k = 0; k < g.shape().batch; ++k) {
                              if (grads[0]) {
                                grads[0]->mat(k).noalias() += g.mat(k) * in[1]->mat(k).transpose();
                              }
                              if (grads[1]) {
                                grads[1]->mat(k).noalias() += in[0]->mat(k).transpose() * g.mat(k);
                              }
                            }
                          });
}

Var transpose(Var a) {
  const Shape s = a.shape();
  Tensor y(Shape{s.batch, s.cols, s.rows});
  for (int k = 0; k < s.batch; ++k) y.mat(k) = a.value().mat(k).transpose();
  return a.graph().record("transpose", {a}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              grads[0]->mat(k) += g.mat(k).transpose();
                            }
                          });
}

Var trace(Var a) {
  require_square("trace", a);
  const Shape s = a.shape();
  Tensor y(Shape{s.batch, 1, 1});
  for (int k = 0; k < s.batch; ++k) y[static_cast<std::size_t>(k)] = a.value().mat(k).trace();
  return a.graph().record("trace", {a}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            const int n = in[0]->shape().rows;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              for (int i = 0; i < n; ++i) {
                                (*grads[0])(k, i, i) += g[static_cast<std::size_t>(k)];
                              }
                            }
                          });
}

Var add_identity(Var a, double diag_value) {
  require_square("add_identity", a);
  Tensor y = a.value();
  for (int k = 0; k < y.shape().batch; ++k) {
    for (int i = 0; i < y.shape().rows; ++i) y(k, i, i) += diag_value;
  }
  return a.graph().record("add_identity", {a}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (grads[0]) grads[0]->accumulate(g);
                          });
}

Var symmetrize(Var a) {
  require_square("symmetrize", a);
  Tensor y(a.shape());
  for (int k = 0; k < y.shape().batch; ++k) {
    y.mat(k) = 0.5 * (a.value().mat(k) + a.value().mat(k).transpose());
  }
  return a.graph().record("symmetrize", {a}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              grads[0]->mat(k) += 0.5 * (g.mat(k) + g.mat(k).transpose());
                            }
                          });
}

Var inverse(Var a) {
  require_square("inverse", a);
  const Shape s = a.shape();
  Tensor y(s);
  for (int k = 0; k < s.batch; ++k) {
    Eigen::PartialPivLU<RowMatrix> lu(a.value().mat(k));
    if (lu.determinant() == 0.0 || !std::isfinite(lu.rcond()) || lu.rcond() < 1e-15) {
      throw NumericError(
          fmt::format("inverse: singular matrix at batch element {} (rcond {:.3g})", k,
                      lu.rcond()));
    }
    y.mat(k) = lu.inverse();
  }
  return a.graph().record("inverse", {a}, std::move(y),
                          [](const Tensor& g, const Tensor& out, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              const auto yt = out.mat(k).transpose();
                              grads[0]->mat(k).noalias() -= yt * g.mat(k) * yt;
                            }
                          });
}

Var spd_inverse(Var a) {
  require_square("spd_inverse", a);
  const Shape s = a.shape();
  Tensor y(s);
  const RowMatrix eye = RowMatrix::Identity(s.rows, s.cols);
  for (int k = 0; k < s.batch; ++k) {
    const RowMatrix sym = 0.5 * (a.value().mat(k) + a.value().mat(k).transpose());
    Eigen::LLT<RowMatrix> llt(sym);
    if (llt.info() != Eigen::Success) {
      throw NumericError(fmt::format(
          "spd_inverse: matrix not positive definite at batch element {}", k));
    }
    const RowMatrix inv = llt.solve(eye);
    y.mat(k) = 0.5 * (inv + inv.transpose());
  }
  return a.graph().record("spd_inverse", {a}, std::move(y),
                          [](const Tensor& g, const Tensor& out, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              const RowMatrix m = -(out.mat(k) * g.mat(k) * out.mat(k));
                              grads[0]->mat(k) += 0.5 * (m + m.transpose());
                            }
                          });
}

Var det(Var a) {
  require_square("det", a);
  const Shape s = a.shape();
  Tensor y(Shape{s.batch, 1, 1});
  for (int k = 0; k < s.batch; ++k) {
    y[static_cast<std::size_t>(k)] = a.value().mat(k).determinant();
  }
  return a.graph().record(
      "det", {a}, std::move(y),
      [](const Tensor& g, const Tensor& out, std::span<const Tensor* const> in,
         std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (int k = 0; k < g.shape().batch; ++k) {
          const double d = out[static_cast<std::size_t>(k)];
          if (d == 0.0) throw NumericError("det: gradient undefined for a singular matrix");
          const RowMatrix inv = in[0]->mat(k).inverse();
          grads[0]->mat(k) += (g[static_cast<std::size_t>(k)] * d) * inv.transpose();
        }
      });
}

Var logdet(Var a) {
  require_square("logdet", a);
  const Shape s = a.shape();
  Tensor y(Shape{s.batch, 1, 1});
  for (int k = 0; k < s.batch; ++k) {
    const double d = a.value().mat(k).determinant();
    if (!(d > 0.0)) {
      throw NumericError(
          fmt::format("logdet: non-positive determinant {} at batch element {}", d, k));
    }
    y[static_cast<std::size_t>(k)] = std::log(d);
  }
  return a.graph().record("logdet", {a}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
                            if (!grads[0]) return;
                            for (int k = 0; k < g.shape().batch; ++k) {
                              const RowMatrix inv = in[0]->mat(k).inverse();
                              grads[0]->mat(k) += g[static_cast<std::size_t>(k)] * inv.transpose();
                            }
                          });
}

Var cholesky(Var a) {
  require_square("cholesky", a);
  const Shape s = a.shape();
  Tensor y(s);
  for (int k = 0; k < s.batch; ++k) {
    const RowMatrix sym = 0.5 * (a.value().mat(k) + a.value().mat(k).transpose());
    Eigen::LLT<RowMatrix> llt(sym);
    if (llt.info() != Eigen::Success) {
      throw NumericError(
          fmt::format("cholesky: matrix not positive definite at batch element {}", k));
    }
    y.mat(k) = llt.matrixL();
  }
  // For A = L L^T:  A_bar = sym(L^-T Phi(L^T L_bar) L^-1), where Phi keeps the
  // lower triangle and halves the diagonal.
  return a.graph().record(
      "cholesky", {a}, std::move(y),
      [](const Tensor& g, const Tensor& out, std::span<const Tensor* const>,
         std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (int k = 0; k < g.shape().batch; ++k) {
          const RowMatrix l = out.mat(k);
          const RowMatrix lbar = g.mat(k).triangularView<Eigen::Lower>();
          RowMatrix phi = (l.transpose() * lbar).triangularView<Eigen::Lower>();
          phi.diagonal() *= 0.5;
          // S = L^-T phi L^-1 via two triangular solves
          RowMatrix tmp = l.transpose().triangularView<Eigen::Upper>().solve(phi);
          RowMatrix sm =
              l.transpose().triangularView<Eigen::Upper>().solve(tmp.transpose()).transpose();
          grads[0]->mat(k) += 0.5 * (sm + sm.transpose());
        }
      });
}

Var affine(Var x, Var w, Var b) {
  const Shape sx = x.shape();
  const Shape sw = w.shape();
  const Shape sb = b.shape();
  if (sx.batch != 1 || sw.batch != 1 || sb.batch != 1 || sx.cols != sw.rows ||
      sb.rows != 1 || sb.cols != sw.cols) {
    throw ShapeError(fmt::format("affine: incompatible shapes x{} w{} b{}", sx.str(),
                                 sw.str(), sb.str()));
  }
  Tensor y(Shape{1, sx.rows, sw.cols});
  y.mat(0).noalias() = x.value().mat(0) * w.value().mat(0);
  y.mat(0).rowwise() += b.value().mat(0).row(0);
  return x.graph().record("affine", {x, w, b}, std::move(y),
                          [](const Tensor& g, const Tensor&, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
                            if (grads[0]) {
                              grads[0]->mat(0).noalias() += g.mat(0) * in[1]->mat(0).transpose();
                            }
                            if (grads[1]) {
                              grads[1]->mat(0).noalias() += in[0]->mat(0).transpose() * g.mat(0);
                            }
                            if (grads[2]) grads[2]->mat(0) += g.mat(0).colwise().sum();
                          });
}

}  // namespace mmconf::diff
