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

// Dual-encoder VAE: one encoder per modality emits a bounded latent mean and
// a Cholesky factor, the two posteriors are fused by Gaussian product, and a
// single decoder maps [latent sample, 2D proposal] to a point box plus lower
// and upper corner bounds.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmconf/conformal.hpp"
#include "mmconf/diffcore.hpp"
#include "mmconf/gaussfuse.hpp"
#include "mmconf/infotheory.hpp"
#include "mmconf/tensor.hpp"

namespace mmconf::model {

enum class Modality { A, B };

struct ModelConfig {
  static constexpr int kLatentDim = 4;
  static constexpr int kProposalDim = 4;
  static constexpr int kOutDim = 24;
  static constexpr int kCholParams = 10;

  int feat_dim_a = 32;
  int feat_dim_b = 32;
  int hidden = 64;
  double leaky_slope = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Weights and biases of every layer, in a fixed order.
class ModelParams {
 public:
  ModelParams() = default;

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the config seed.
  static ModelParams init(const ModelConfig& config);
  /// Names and shapes of every parameter for `config`, in storage order.
  static std::vector<std::pair<std::string, Shape>> layout(const ModelConfig& config);

  [[nodiscard]] const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  [[nodiscard]] std::vector<NamedTensor>& entries() { return entries_; }
  [[nodiscard]] const std::vector<NamedTensor>& entries() const { return entries_; }
  void add(std::string name, Tensor value);
  /// Throws ConfigError unless names and shapes match layout(config) and all
  /// entries are finite.
  void validate(const ModelConfig& config) const;
  [[nodiscard]] std::size_t parameter_count() const;

 private:
  std::vector<NamedTensor> entries_;
};

/// Parameters placed on a graph, looked up by name.
class BoundParams {
 public:
  /// `trainable` selects leaves (gradients wanted) or constants.
  BoundParams(diff::Graph& graph, const ModelParams& params, bool trainable);
  /// Binds existing variables, one per entry of `params` in storage order.
  BoundParams(const ModelParams& params, std::vector<diff::Var> vars);
  [[nodiscard]] diff::Var operator[](std::string_view name) const;
  /// Variables in ModelParams storage order.
  [[nodiscard]] const std::vector<diff::Var>& vars() const { return vars_; }

 private:
  std::vector<diff::Var> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One batch of N objects. Shapes: feat_a [1,N,feat_dim_a], feat_b
/// [1,N,feat_dim_b], proposal [1,N,4], eps [N,4,1].
struct BatchInput {
  Tensor feat_a;
  Tensor feat_b;
  Tensor proposal;
  Tensor eps;

  [[nodiscard]] int size() const { return feat_a.shape().rows; }
};

struct LatentVars {
  diff::Var mu;    // [N,4,1]
  diff::Var chol;  // [N,4,4]
};

struct ForwardVars {
  LatentVars latent_a;
  LatentVars latent_b;
  diff::Var v_a;       // regularized covariances [N,4,4]
  diff::Var v_b;
  diff::Var mu_joint;  // [N,4,1]
  diff::Var v_joint;   // [N,4,4]
  diff::Var z;         // [N,4,1]
  diff::Var y_hat;     // [1,N,24]
  diff::Var q_l;
  diff::Var q_h;
  int repaired = 0;
};

LatentVars encode(const BoundParams& params, const ModelConfig& config, diff::Var features,
                  Modality which);
/// Builds the whole forward pass for a batch.
ForwardVars forward(diff::Graph& graph, const BoundParams& params, const ModelConfig& config,
                    const BatchInput& batch);
/// Decoder only: z [N,4,1], proposal [1,N,4] -> (y_hat, q_l, q_h), each [1,N,24].
struct DecodedVars {
  diff::Var y_hat;
  diff::Var q_l;
  diff::Var q_h;
};
DecodedVars decode(const BoundParams& params, const ModelConfig& config, diff::Var z,
                   diff::Var proposal);

/// 1/2 (tr V + mu^T mu - 4 - ln|V|) in nats.
double kl_divergence(const gauss::Vec4& mu, const gauss::Mat4& v);
/// Per batch element, [N,1,1].
diff::Var kl_divergence(diff::Var mu, diff::Var v);

/// Per-sample information diagnostics from a forward pass (values only).
std::vector<info::InfoReport> information(const ForwardVars& fwd);

struct FusedSample {
  gauss::Vec4 z;
  gauss::FusedPosterior posterior;
};

struct BatchOutput {
  conformal::PredictionSet prediction;
  std::vector<info::InfoReport> info;
};

class Model {
 public:
  explicit Model(ModelConfig config);
  Model(ModelConfig config, ModelParams params);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  [[nodiscard]] gauss::LatentGaussian encode(std::span<const double> features,
                                             Modality which) const;
  [[nodiscard]] static FusedSample fuse_and_sample(const gauss::LatentGaussian& a,
                                                   const gauss::LatentGaussian& b,
                                                   const gauss::Vec4& eps);
  /// Single object; each row of the result is 1 x 24.
  [[nodiscard]] conformal::PredictionSet decode(const gauss::Vec4& z,
                                                std::span<const double> proposal) const;
  /// Batched forward without gradients.
  [[nodiscard]] BatchOutput predict(const BatchInput& batch) const;

 private:
  ModelConfig config_;
  ModelParams params_;
};

// --- checkpoint ------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

/// {"version": 1, "config": {...}, "weights": {"name": [row-major values]}}
void save_checkpoint(const std::filesystem::path& path, const Model& model);
/// Throws IoError on unreadable or malformed files, ConfigError on an
/// unknown version or shape mismatch.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mmconf::model
