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

#include "mmconf/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "mmconf/error.hpp"
#include "mmconf/random.hpp"

namespace mmconf::data {
namespace {

constexpr double kFocal = 0.35;
constexpr std::uint64_t kProjectionSeed = 0x70726f6a656374ULL;
constexpr int kCameraInputs = 2 * kCornerCount;
constexpr int kLidarInputs = 7;
// Proposal noise standard deviation per unit of noise_level_a, in
// normalized image units.
constexpr double kProposalNoiseScale = 0.1;

// Fixed random map x -> sin(W x + b), identical for every dataset.
struct FrozenProjection {
  int inputs = 0;
  std::vector<double> weights;  // kFeatureDim x inputs, row-major
  std::vector<double> phase;

  FrozenProjection(int in, double gain, std::uint64_t stream) : inputs(in) {
    Rng rng(mix_seed(kProjectionSeed, stream));
    const double scale = gain / std::sqrt(static_cast<double>(in));
    weights.resize(static_cast<std::size_t>(kFeatureDim) * in);
    for (double& w : weights) w = scale * rng.normal();
    phase.resize(kFeatureDim);
    for (double& p : phase) p = rng.uniform(-std::numbers::pi, std::numbers::pi);
  }

  void apply(std::span<const double> x, std::span<double> out) const {
    for (int r = 0; r < kFeatureDim; ++r) {
      double acc = phase[static_cast<std::size_t>(r)];
      for (int c = 0; c < inputs; ++c) {
        acc += weights[static_cast<std::size_t>(r) * inputs + c] * x[static_cast<std::size_t>(c)];
      }
      out[static_cast<std::size_t>(r)] = std::sin(acc);
    }
  }
};

const FrozenProjection& camera_projection() {
  static const FrozenProjection p(kCameraInputs, 3.0, 1);
  return p;
}

const FrozenProjection& lidar_projection() {
  static const FrozenProjection p(kLidarInputs, 2.5, 2);
  return p;
}

double to_unit(double v, const Range& r) { return 2.0 * (v - r.lo) / (r.hi - r.lo) - 1.0; }

void check_range(const Range& r, const char* what, int axis) {
  if (!(r.hi > r.lo) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw ConfigError(fmt::format("{} range on axis {} is degenerate: [{}, {}]", what, axis,
                                  r.lo, r.hi));
  }
}

}  // namespace

void DataConfig::validate() const {
  if (n_samples < 0) throw ConfigError(fmt::format("n_samples must be >= 0, got {}", n_samples));
  for (int a = 0; a < 3; ++a) {
    check_range(center[static_cast<std::size_t>(a)], "center", a);
    check_range(size[static_cast<std::size_t>(a)], "size", a);
    if (!(size[static_cast<std::size_t>(a)].lo > 0.0)) {
      throw ConfigError(fmt::format("size range on axis {} must be positive", a));
    }
  }
  // the box must stay in front of the camera
  if (!(center[2].lo - 0.5 * size[2].hi > 0.5)) {
    throw ConfigError("depth range places boxes behind or too close to the camera");
  }
  if (!(noise_level_a >= 0.0) || !(noise_level_b >= 0.0)) {
    throw ConfigError("noise levels must be non-negative");
  }
  for (double p : {dropout_prob_a, dropout_prob_b}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError(fmt::format("dropout probability {} outside [0, 1]", p));
    }
  }
}

Corners corners_from_box(const Vec3& center, const Vec3& size) {
  for (int a = 0; a < 3; ++a) {
    if (!(size[static_cast<std::size_t>(a)] > 0.0)) {
      throw Error(fmt::format("corners_from_box: non-positive size {} on axis {}",
                              size[static_cast<std::size_t>(a)], a));
    }
  }
  Corners out{};
  for (int i = 0; i < kCornerCount; ++i) {
    for (int a = 0; a < 3; ++a) {
      const bool plus = (i >> (2 - a)) & 1;
      const auto ua = static_cast<std::size_t>(a);
      out[static_cast<std::size_t>(3 * i + a)] =
          center[ua] + (plus ? 0.5 : -0.5) * size[ua];
    }
  }
  return out;
}

Box box_from_corners(std::span<const double> corners) {
  if (corners.size() != kCornerValues) {
    throw ShapeError(fmt::format("box_from_corners: expected 24 values, got {}", corners.size()));
  }
  Box b;
  for (int a = 0; a < 3; ++a) {
    double lo = corners[static_cast<std::size_t>(a)];
    double hi = lo;
    double sum = 0.0;
    for (int i = 0; i < kCornerCount; ++i) {
      const double v = corners[static_cast<std::size_t>(3 * i + a)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    b.center[static_cast<std::size_t>(a)] = sum / kCornerCount;
    b.size[static_cast<std::size_t>(a)] = hi - lo;
  }
  return b;
}

Box bounding_box(std::span<const double> corners) {
  if (corners.size() != kCornerValues) {
    throw ShapeError(fmt::format("bounding_box: expected 24 values, got {}", corners.size()));
  }
  Box b;
  for (int a = 0; a < 3; ++a) {
    double lo = corners[static_cast<std::size_t>(a)];
    double hi = lo;
    for (int i = 1; i < kCornerCount; ++i) {
      lo = std::min(lo, corners[static_cast<std::size_t>(3 * i + a)]);
      hi = std::max(hi, corners[static_cast<std::size_t>(3 * i + a)]);
    }
    b.center[static_cast<std::size_t>(a)] = 0.5 * (lo + hi);
    b.size[static_cast<std::size_t>(a)] = hi - lo;
  }
  return b;
}

double iou3d_axis_aligned(const Box& a, const Box& b) {
  double inter = 1.0;
  double vol_a = 1.0;
  double vol_b = 1.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double lo = std::max(a.center[k] - 0.5 * a.size[k], b.center[k] - 0.5 * b.size[k]);
    const double hi = std::min(a.center[k] + 0.5 * a.size[k], b.center[k] + 0.5 * b.size[k]);
    inter *= std::max(0.0, hi - lo);
    vol_a *= a.size[k];
    vol_b *= b.size[k];
  }
  const double uni = vol_a + vol_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

// Normalized image coordinates of the eight corners, (u, v) per corner.
std::array<double, kCameraInputs> project_corners(const Corners& corners) {
  std::array<double, kCameraInputs> uv{};
  for (int i = 0; i < kCornerCount; ++i) {
    const auto base = static_cast<std::size_t>(3 * i);
    const double z = corners[base + 2];
    uv[static_cast<std::size_t>(2 * i)] = 0.5 + kFocal * corners[base] / z;
    uv[static_cast<std::size_t>(2 * i + 1)] = 0.5 + kFocal * corners[base + 1] / z;
  }
  return uv;
}

}  // namespace

std::array<double, kProposalDim> project_box(const Vec3& center, const Vec3& size) {
  const auto uv = project_corners(corners_from_box(center, size));
  double u0 = uv[0], u1 = uv[0], v0 = uv[1], v1 = uv[1];
  for (int i = 1; i < kCornerCount; ++i) {
    u0 = std::min(u0, uv[static_cast<std::size_t>(2 * i)]);
    u1 = std::max(u1, uv[static_cast<std::size_t>(2 * i)]);
    v0 = std::min(v0, uv[static_cast<std::size_t>(2 * i + 1)]);
    v1 = std::max(v1, uv[static_cast<std::size_t>(2 * i + 1)]);
  }
  return {std::clamp(0.5 * (u0 + u1), 0.0, 1.0), std::clamp(0.5 * (v0 + v1), 0.0, 1.0),
          std::clamp(u1 - u0, 0.0, 1.0), std::clamp(v1 - v0, 0.0, 1.0)};
}

SceneSample generate_scene(const DataConfig& config, std::uint64_t index) {
  Rng rng(mix_seed(config.seed, index));
  SceneSample s;
  for (std::size_t a = 0; a < 3; ++a) s.center[a] = rng.uniform(config.center[a].lo, config.center[a].hi);
  for (std::size_t a = 0; a < 3; ++a) s.size[a] = rng.uniform(config.size[a].lo, config.size[a].hi);
  s.corners = corners_from_box(s.center, s.size);
  s.noise_level_a = config.noise_level_a;
  s.noise_level_b = config.noise_level_b;

  // all draws are unconditional
  std::array<double, kProposalDim> proposal_noise{};
  for (double& v : proposal_noise) v = rng.normal();
  std::array<double, kFeatureDim> noise_a{};
  for (double& v : noise_a) v = rng.normal();
  std::array<double, kFeatureDim> noise_b{};
  for (double& v : noise_b) v = rng.normal();
  const bool drop_a = rng.uniform() < config.dropout_prob_a;
  const bool drop_b = rng.uniform() < config.dropout_prob_b;

  const auto exact = project_box(s.center, s.size);
  for (std::size_t i = 0; i < kProposalDim; ++i) {
    s.proposal[i] = std::clamp(
        exact[i] + kProposalNoiseScale * config.noise_level_a * proposal_noise[i], 0.0, 1.0);
  }

  // camera-like: projected corner geometry only, so depth is ambiguous up to scale
  auto uv = project_corners(s.corners);
  for (double& v : uv) v = 2.0 * (v - 0.5);
  s.feat_a.assign(kFeatureDim, 0.0);
  camera_projection().apply(uv, s.feat_a);
  for (std::size_t i = 0; i < kFeatureDim; ++i) s.feat_a[i] += config.noise_level_a * noise_a[i];

  // lidar-like: metric center, size and range
  const double range = std::sqrt(s.center[0] * s.center[0] + s.center[1] * s.center[1] +
                                 s.center[2] * s.center[2]);
  const Range range_span{config.center[2].lo, std::hypot(std::max(std::abs(config.center[0].lo),
                                                                  std::abs(config.center[0].hi)),
                                                         std::max(std::abs(config.center[1].lo),
                                                                  std::abs(config.center[1].hi)),
                                                         config.center[2].hi)};
  const std::array<double, kLidarInputs> geo{
      to_unit(s.center[0], config.center[0]), to_unit(s.center[1], config.center[1]),
      to_unit(s.center[2], config.center[2]), to_unit(s.size[0], config.size[0]),
      to_unit(s.size[1], config.size[1]),     to_unit(s.size[2], config.size[2]),
      to_unit(range, range_span)};
  s.feat_b.assign(kFeatureDim, 0.0);
  lidar_projection().apply(geo, s.feat_b);
  for (std::size_t i = 0; i < kFeatureDim; ++i) s.feat_b[i] += config.noise_level_b * noise_b[i];

  if (drop_a) std::fill(s.feat_a.begin(), s.feat_a.end(), 0.0);
  if (drop_b) std::fill(s.feat_b.begin(), s.feat_b.end(), 0.0);
  return s;
}

std::vector<SceneSample> generate_dataset(const DataConfig& config) {
  config.validate();
  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(config.n_samples));
  for (int i = 0; i < config.n_samples; ++i) {
    out.push_back(generate_scene(config, static_cast<std::uint64_t>(i)));
  }
  return out;
}

// --- file format --------------------------------------------------------------------

using nlohmann::json;

void write_samples(const std::filesystem::path& path, std::span<const SceneSample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  for (const SceneSample& s : samples) {
    json j;
    j["center"] = s.center;
    j["size"] = s.size;
    j["corners"] = s.corners;
    j["feat_a"] = s.feat_a;
    j["feat_b"] = s.feat_b;
    j["proposal"] = s.proposal;
    j["noise_level_a"] = s.noise_level_a;
    j["noise_level_b"] = s.noise_level_b;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

namespace {

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* field, std::size_t line) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != N) {
    throw IoError(fmt::format("line {}: field '{}' has {} values, expected {}", line, field,
                              v.size(), N));
  }
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

const json& field(const json& j, const char* name, std::size_t line) {
  const auto it = j.find(name);
  if (it == j.end()) throw IoError(fmt::format("line {}: missing field '{}'", line, name));
  return *it;
}

}  // namespace

std::vector<SceneSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  std::vector<SceneSample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw IoError(fmt::format("line {}: malformed JSON ({})", line, e.what()));
    }
    if (!j.is_object()) throw IoError(fmt::format("line {}: expected a JSON object", line));
    try {
      SceneSample s;
      s.center = fixed_array<3>(field(j, "center", line), "center", line);
      s.size = fixed_array<3>(field(j, "size", line), "size", line);
      s.corners = fixed_array<kCornerValues>(field(j, "corners", line), "corners", line);
      s.feat_a = field(j, "feat_a", line).get<std::vector<double>>();
      s.feat_b = field(j, "feat_b", line).get<std::vector<double>>();
      s.proposal = fixed_array<kProposalDim>(field(j, "proposal", line), "proposal", line);
      s.noise_level_a = field(j, "noise_level_a", line).get<double>();
      s.noise_level_b = field(j, "noise_level_b", line).get<double>();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw IoError(fmt::format("line {}: {}", line, e.what()));
    }
  }
  return out;
}

}  // namespace mmconf::data
