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
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "mmconf/trainer.hpp"

namespace mmconf::train {

namespace {

data::Corners row_corners(const RowMatrix& m, Eigen::Index r) {
  data::Corners c{};
  for (int k = 0; k < data::kCornerValues; ++k) c[static_cast<std::size_t>(k)] = m(r, k);
  return c;
}

data::Box hull_box(const data::Corners& lower, const data::Corners& upper) {
  data::Box box;
  for (int axis = 0; axis < 3; ++axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int k = 0; k < data::kCornerCount; ++k) {
      const auto i = static_cast<std::size_t>(3 * k + axis);
      lo = std::min({lo, lower[i], upper[i]});
      hi = std::max({hi, lower[i], upper[i]});
    }
    box.center[static_cast<std::size_t>(axis)] = 0.5 * (lo + hi);
    box.size[static_cast<std::size_t>(axis)] = hi - lo;
  }
  return box;
}

}  // namespace

EvalReport evaluate_predictions(std::span<const data::SceneSample> samples,
                                const conformal::PredictionSet& prediction) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n == 0) throw Error("evaluate: no samples");
  for (const RowMatrix* m : {&prediction.y_hat, &prediction.q_l, &prediction.q_h}) {
    if (m->rows() != n || m->cols() != data::kCornerValues) {
      throw ShapeError(fmt::format("evaluate: prediction is {}x{}, expected {}x{}", m->rows(),
                                   m->cols(), n, data::kCornerValues));
    }
  }
  RowMatrix y(n, data::kCornerValues);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int k = 0; k < data::kCornerValues; ++k) {
      y(r, k) = samples[static_cast<std::size_t>(r)].corners[static_cast<std::size_t>(k)];
    }
  }

  EvalReport report;
  report.num_objects = static_cast<int>(n);
  report.entry_coverage = conformal::batch_coverage(y, prediction.q_l, prediction.q_h);
  report.joint_coverage = conformal::joint_coverage(y, prediction.q_l, prediction.q_h);
  report.mean_width = conformal::uncertainty_metric(prediction.q_l, prediction.q_h);

  std::vector<std::vector<double>> widths;
  widths.reserve(samples.size());
  int hit_point = 0;
  int hit_box = 0;
  int hit_either = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    ObjectGeometry obj;
    obj.truth = samples[static_cast<std::size_t>(r)].corners;
    obj.predicted = row_corners(prediction.y_hat, r);
    obj.lower = row_corners(prediction.q_l, r);
    obj.upper = row_corners(prediction.q_h, r);
    obj.combined = hull_box(obj.lower, obj.upper);
    const data::Box truth = data::box_from_corners(obj.truth);
    obj.iou_point = data::iou3d_axis_aligned(data::bounding_box(obj.predicted), truth);
    obj.iou_combined = data::iou3d_axis_aligned(obj.combined, truth);
    std::vector<double> w(data::kCornerValues);
    for (int k = 0; k < data::kCornerValues; ++k) {
      const auto i = static_cast<std::size_t>(k);
      w[i] = obj.upper[i] - obj.lower[i];
    }
    obj.mean_width = std::accumulate(w.begin(), w.end(), 0.0) / data::kCornerValues;
    widths.push_back(std::move(w));

    const bool p = obj.iou_point >= kIouThreshold;
    const bool b = obj.iou_combined >= kIouThreshold;
    hit_point += p ? 1 : 0;
    hit_box += b ? 1 : 0;
    hit_either += (p || b) ? 1 : 0;
    report.objects.push_back(obj);
  }
  const double dn = static_cast<double>(n);
  report.precision_point = hit_point / dn;
  report.precision_uncertainty_box_only = hit_box / dn;
  report.precision_uncertainty = hit_either / dn;
  report.mau = conformal::mau(widths);
  return report;
}

EvalReport evaluate(const model::Model& model, std::span<const data::SceneSample> samples) {
  if (samples.empty()) throw Error("evaluate: no samples");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::vector<double> eps(samples.size() * 4, 0.0);
  const model::BatchOutput out = model.predict(make_batch(samples, idx, eps, nullptr));
  EvalReport report = evaluate_predictions(samples, out.prediction);
  double nmi = 0.0;
  for (const info::InfoReport& r : out.info) nmi += r.nmi;
  report.mean_nmi = nmi / static_cast<double>(out.info.size());
  return report;
}

// --- metrics file -----------------------------------------------------------------

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> rows) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << kMetricsHeader << '\n';
  for (const EpochMetrics& m : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", m.epoch, m.total_loss, m.smoothl1,
                       m.kl, m.intscore, m.comcal, m.mean_u, m.mean_nmi, m.train_coverage,
                       m.val_coverage, m.val_mau);
  }
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

namespace {

double parse_double(std::string_view field, bool& ok) {
  double v = 0.0;
  if (field == "nan" || field == "inf" || field == "-inf") {
    if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
    return field == "inf" ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
  }
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) ok = false;
  return v;
}

}  // namespace

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw IoError(fmt::format("{}: line 1: empty file", path.string()));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw IoError(fmt::format("{}: line 1: unexpected header", path.string()));
  }
  std::vector<EpochMetrics> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 11) {
      throw IoError(fmt::format("{}: line {}: expected 11 fields, found {}", path.string(),
                                line_no, fields.size()));
    }
    bool ok = true;
    EpochMetrics m;
    const double epoch = parse_double(fields[0], ok);
    m.total_loss = parse_double(fields[1], ok);
    m.smoothl1 = parse_double(fields[2], ok);
    m.kl = parse_double(fields[3], ok);
    m.intscore = parse_double(fields[4], ok);
    m.comcal = parse_double(fields[5], ok);
    m.mean_u = parse_double(fields[6], ok);
    m.mean_nmi = parse_double(fields[7], ok);
    m.train_coverage = parse_double(fields[8], ok);
    m.val_coverage = parse_double(fields[9], ok);
    m.val_mau = parse_double(fields[10], ok);
    if (!ok || epoch != std::floor(epoch) || !std::isfinite(epoch)) {
      throw IoError(fmt::format("{}: line {}: malformed value", path.string(), line_no));
    }
    m.epoch = static_cast<int>(epoch);
    rows.push_back(m);
  }
  return rows;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError(fmt::format("pearson: {} vs {} values", x.size(), y.size()));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (x.size() < 2) return nan;
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) return nan;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return nan;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace mmconf::train
