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

// Multitask training loss, the cross-conformal training loop and
// evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mmconf/conformal.hpp"
#include "mmconf/diffcore.hpp"
#include "mmconf/error.hpp"
#include "mmconf/model.hpp"
#include "mmconf/synthdata.hpp"

namespace mmconf::train {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  conformal::ConformalConfig conformal;
  std::uint64_t seed = 1;
  double val_fraction = 0.2;
  /// Latent draws per datum per step.
  int reparam_samples = 1;
  /// Let gradients flow through the batch NMI weight in the calibration term.
  bool nmi_grad = false;
  /// Let gradients flow through U in the reconstruction weight.
  bool u_grad = false;
  double smooth_l1_beta = 1.0;
  /// Loss magnitude treated as divergence.
  double divergence_threshold = 1e6;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double smoothl1 = 0.0;
  double kl = 0.0;
  double intscore = 0.0;
  double comcal = 0.0;
  double cal = 0.0;
  double sharp = 0.0;
  double u = 0.0;
  double nmi = 0.0;
};

struct LossVars {
  diff::Var total;
  diff::Var smoothl1;
  diff::Var kl;
  diff::Var intscore;
  diff::Var comcal;
  diff::Var cal;
  diff::Var sharp;
};

/// smoothl1 * (1 + 0.01 u) + kl + intscore + comcal
double compose_total(double smoothl1, double u, double kl, double intscore, double comcal);

/// Builds the training loss for one forward pass. `y` is the [1,N,24]
/// target. `u` and `nmi` are the batch's detached width and mean NMI; they
/// are replaced by graph values when config.u_grad / config.nmi_grad are set.
LossVars total_loss(diff::Graph& graph, const model::ForwardVars& fwd, diff::Var y,
                    const conformal::CalibrationState& state, const TrainConfig& config,
                    double u, double nmi);

LossBreakdown breakdown(const LossVars& loss, double u, double nmi);

struct EpochMetrics {
  int epoch = 0;
  double total_loss = 0.0;
  double smoothl1 = 0.0;
  double kl = 0.0;
  double intscore = 0.0;
  double comcal = 0.0;
  double mean_u = 0.0;
  double mean_nmi = 0.0;
  double train_coverage = 0.0;
  double val_coverage = 0.0;
  double val_mau = 0.0;
};

struct TrainResult {
  model::Model model;
  std::vector<EpochMetrics> metrics;
};

/// Raised when the loss exceeds the divergence threshold or turns
/// non-finite. Carries the parameters from the end of the last completed
/// epoch (or the initial ones).
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, model::Model last_good, int epoch)
      : Error(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  [[nodiscard]] const model::Model& last_good() const { return last_good_; }
  [[nodiscard]] int epoch() const { return epoch_; }

 private:
  model::Model last_good_;
  int epoch_;
};

struct Split {
  std::vector<data::SceneSample> train;
  std::vector<data::SceneSample> val;
};

/// Seeded permutation; the last val_fraction of it becomes the validation set.
Split split(std::span<const data::SceneSample> samples, double val_fraction, std::uint64_t seed);

/// Packs samples into model inputs with the given latent noise (N x 4,
/// row-major) and returns the [1,N,24] targets through `targets`.
model::BatchInput make_batch(std::span<const data::SceneSample> samples,
                             std::span<const std::size_t> indices,
                             std::span<const double> eps, Tensor* targets);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains from scratch on `samples` (split internally). Deterministic given
/// the seeds in both configs.
TrainResult train(std::span<const data::SceneSample> samples,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// --- evaluation ------------------------------------------------------------------

inline constexpr double kIouThreshold = 0.7;

struct ObjectGeometry {
  data::Corners truth{};
  data::Corners predicted{};
  data::Corners lower{};
  data::Corners upper{};
  /// Per-axis hull of lower and upper corners.
  data::Box combined;
  double iou_point = 0.0;
  double iou_combined = 0.0;
  double mean_width = 0.0;
};

struct EvalReport {
  double entry_coverage = 0.0;
  double joint_coverage = 0.0;
  double mean_width = 0.0;
  double mau = 0.0;
  /// Fraction of objects whose point box reaches IoU >= 0.7.
  double precision_point = 0.0;
  /// Fraction matched by the point box or by the uncertainty box.
  double precision_uncertainty = 0.0;
  /// Fraction matched by the uncertainty box alone.
  double precision_uncertainty_box_only = 0.0;
  int num_objects = 0;
  double mean_nmi = 0.0;
  std::vector<ObjectGeometry> objects;
};

/// Scores precomputed predictions against the samples' ground truth.
EvalReport evaluate_predictions(std::span<const data::SceneSample> samples,
                                const conformal::PredictionSet& prediction);

/// Runs the model with the posterior-mean latent (eps = 0) and scores it.
EvalReport evaluate(const model::Model& model, std::span<const data::SceneSample> samples);

// --- metrics file -----------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "epoch,total_loss,smoothl1,kl,intscore,comcal,mean_U,mean_NMI,train_coverage,"
    "val_coverage,val_MAU";

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> rows);
/// Throws IoError naming the 1-based line of the first malformed row.
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

/// Pearson correlation; returns NaN when either series has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace mmconf::train
