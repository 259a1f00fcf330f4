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

// Synthetic two-modality scenes standing in for camera/LiDAR features, plus
// axis-aligned box geometry and the line-delimited JSON data format.
//
// Coordinates are camera-style: x lateral, y vertical, z depth (meters).

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mmconf::data {

inline constexpr int kFeatureDim = 32;
inline constexpr int kCornerCount = 8;
inline constexpr int kCornerValues = 24;
inline constexpr int kProposalDim = 4;

using Vec3 = std::array<double, 3>;
using Corners = std::array<double, kCornerValues>;

struct Box {
  Vec3 center{};
  Vec3 size{};
};

struct SceneSample {
  Vec3 center{};
  Vec3 size{};
  Corners corners{};
  std::vector<double> feat_a;
  std::vector<double> feat_b;
  std::array<double, kProposalDim> proposal{};
  double noise_level_a = 0.0;
  double noise_level_b = 0.0;

  friend bool operator==(const SceneSample&, const SceneSample&) = default;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

struct DataConfig {
  int n_samples = 5000;
  std::array<Range, 3> center{{{-4.0, 4.0}, {-1.0, 1.0}, {6.0, 14.0}}};
  std::array<Range, 3> size{{{1.4, 2.0}, {1.2, 1.8}, {2.8, 4.6}}};
  double noise_level_a = 0.1;
  double noise_level_b = 0.1;
  double dropout_prob_a = 0.0;
  double dropout_prob_b = 0.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError on degenerate ranges, non-positive sizes, negative
  /// noise or probabilities outside [0, 1].
  void validate() const;
};

/// Eight corners at center +/- size/2, ordered (---, --+, -+-, -++, +--, +-+, ++-, +++)
/// and flattened to 24 values. Throws Error on a non-positive size.
Corners corners_from_box(const Vec3& center, const Vec3& size);

/// Per-axis mean and extent of a corner set.
Box box_from_corners(std::span<const double> corners);

/// Per-axis min/max hull of a corner set.
Box bounding_box(std::span<const double> corners);

/// Intersection over union of two axis-aligned boxes, in [0, 1].
double iou3d_axis_aligned(const Box& a, const Box& b);

/// Pinhole projection of the box onto the normalized image plane:
/// (cx, cy, w, h) of the 2D hull, each clamped to [0, 1].
std::array<double, kProposalDim> project_box(const Vec3& center, const Vec3& size);

/// Sample `index` of the dataset described by `config`; depends only on
/// (config, index).
SceneSample generate_scene(const DataConfig& config, std::uint64_t index);

std::vector<SceneSample> generate_dataset(const DataConfig& config);

/// One JSON object per line with the SceneSample field names.
void write_samples(const std::filesystem::path& path, std::span<const SceneSample> samples);
/// Throws IoError naming the line number on malformed input and the field
/// name on missing fields.
std::vector<SceneSample> read_samples(const std::filesystem::path& path);

}  // namespace mmconf::data
