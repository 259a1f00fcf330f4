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

#include "mmconf/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mmconf/error.hpp"
#include "mmconf/random.hpp"

namespace mmconf::model {
namespace {

using diff::Var;

struct LayerSpec {
  std::string name;
  int in;
  int out;
};

std::vector<LayerSpec> layers(const ModelConfig& c) {
  const int h = c.hidden;
  return {
      {"enc_a.fc1", c.feat_dim_a, h},
      {"enc_a.fc2", h, h},
      {"enc_a.mu", h, ModelConfig::kLatentDim},
      {"enc_a.chol", h, ModelConfig::kCholParams},
      {"enc_b.fc1", c.feat_dim_b, h},
      {"enc_b.fc2", h, h},
      {"enc_b.mu", h, ModelConfig::kLatentDim},
      {"enc_b.chol", h, ModelConfig::kCholParams},
      {"dec.fc1", ModelConfig::kLatentDim + ModelConfig::kProposalDim, h},
      {"dec.fc2", h, h},
      {"dec.y_hat", h, ModelConfig::kOutDim},
      {"dec.delta_l", h, ModelConfig::kOutDim},
      {"dec.delta_h", h, ModelConfig::kOutDim},
  };
}

// Runs `build` and prefixes numeric failures with the layer name.
template <class F>
Var in_layer(const std::string& layer, F&& build) {
  try {
    return build();
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("layer {}: {}", layer, e.what()));
  }
}

Var dense(const BoundParams& p, const std::string& layer, Var x) {
  return in_layer(layer, [&] { return diff::affine(x, p[layer + ".weight"], p[layer + ".bias"]); });
}

Var hidden_layer(const BoundParams& p, const ModelConfig& c, const std::string& layer, Var x) {
  return in_layer(layer, [&] {
    return diff::leaky_relu(diff::affine(x, p[layer + ".weight"], p[layer + ".bias"]),
                            c.leaky_slope);
  });
}

Tensor row_tensor(std::span<const double> values) {
  return Tensor(Shape{1, 1, static_cast<int>(values.size())},
                std::vector<double>(values.begin(), values.end()));
}

}  // namespace

void ModelConfig::validate() const {
  if (feat_dim_a <= 0 || feat_dim_b <= 0) {
    throw ConfigError(fmt::format("feature dimensions must be positive (got {} and {})",
                                  feat_dim_a, feat_dim_b));
  }
  if (hidden <= 0) throw ConfigError(fmt::format("hidden width must be positive, got {}", hidden));
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw ConfigError(fmt::format("leaky_slope must lie in [0, 1), got {}", leaky_slope));
  }
}

// --- parameters ------------------------------------------------------------------

std::vector<std::pair<std::string, Shape>> ModelParams::layout(const ModelConfig& config) {
  std::vector<std::pair<std::string, Shape>> out;
  for (const LayerSpec& l : layers(config)) {
    out.emplace_back(l.name + ".weight", Shape{1, l.in, l.out});
    out.emplace_back(l.name + ".bias", Shape{1, 1, l.out});
  }
  return out;
}

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 0x6d6f64656cULL));
  ModelParams params;
  for (const LayerSpec& l : layers(config)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    Tensor w(Shape{1, l.in, l.out});
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    Tensor b(Shape{1, 1, l.out});
    for (double& v : b.values()) v = rng.uniform(-bound, bound);
    params.add(l.name + ".weight", std::move(w));
    params.add(l.name + ".bias", std::move(b));
  }
  return params;
}

const Tensor& ModelParams::at(std::string_view name) const {
  for (const NamedTensor& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw Error(fmt::format("unknown parameter '{}'", name));
}

Tensor& ModelParams::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

void ModelParams::add(std::string name, Tensor value) {
  entries_.push_back({std::move(name), std::move(value)});
}

void ModelParams::validate(const ModelConfig& config) const {
  const auto expected = layout(config);
  if (expected.size() != entries_.size()) {
    throw ConfigError(fmt::format("expected {} parameter tensors, found {}", expected.size(),
                                  entries_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const NamedTensor& e = entries_[i];
    if (e.name != expected[i].first) {
      throw ConfigError(
          fmt::format("parameter {} is '{}', expected '{}'", i, e.name, expected[i].first));
    }
    if (e.value.shape() != expected[i].second) {
      throw ConfigError(fmt::format("parameter '{}' has shape {}, expected {}", e.name,
                                    e.value.shape().str(), expected[i].second.str()));
    }
    if (!e.value.all_finite()) {
      throw ConfigError(fmt::format("parameter '{}' has non-finite entries", e.name));
    }
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const NamedTensor& e : entries_) n += e.value.size();
  return n;
}

BoundParams::BoundParams(diff::Graph& graph, const ModelParams& params, bool trainable) {
  vars_.reserve(params.entries().size());
  for (const NamedTensor& e : params.entries()) {
    index_.emplace(e.name, vars_.size());
    vars_.push_back(trainable ? graph.leaf(e.value) : graph.constant(e.value));
  }
}

BoundParams::BoundParams(const ModelParams& params, std::vector<diff::Var> vars)
    : vars_(std::move(vars)) {
  if (vars_.size() != params.entries().size()) {
    throw ShapeError(fmt::format("BoundParams: {} variables for {} parameters", vars_.size(),
                                 params.entries().size()));
  }
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const NamedTensor& e = params.entries()[i];
    if (!(vars_[i].shape() == e.value.shape())) {
      throw ShapeError(fmt::format("BoundParams: '{}' expects {}, got {}", e.name,
                                   e.value.shape().str(), vars_[i].shape().str()));
    }
    index_.emplace(e.name, i);
  }
}

Var BoundParams::operator[](std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return vars_[it->second];
}

// --- graph forward ----------------------------------------------------------------

LatentVars encode(const BoundParams& params, const ModelConfig& config, Var features,
                  Modality which) {
  const std::string prefix = which == Modality::A ? "enc_a" : "enc_b";
  const int expected = which == Modality::A ? config.feat_dim_a : config.feat_dim_b;
  if (features.shape().cols != expected) {
    throw ShapeError(fmt::format("{}: expected {} features, got {}", prefix, expected,
                                 features.shape().cols));
  }
  Var h = hidden_layer(params, config, prefix + ".fc1", features);
  h = hidden_layer(params, config, prefix + ".fc2", h);

  LatentVars out;
  // softsign(x) + 1 keeps every mean component inside (0, 2)
  out.mu = in_layer(prefix + ".mu", [&] {
    return diff::rows_to_batch(diff::add_scalar(diff::softsign(dense(params, prefix + ".mu", h)), 1.0));
  });
  out.chol = in_layer(prefix + ".chol", [&] {
    const Var raw = dense(params, prefix + ".chol", h);
    const Var diag = diff::add_scalar(diff::softplus(diff::slice_cols(raw, 0, 4)),
                                      gauss::kMinCholDiagonal);
    const Var off = diff::slice_cols(raw, 4, 6);
    return diff::tril_fill(diff::rows_to_batch(diff::concat_cols(diag, off)), 4);
  });
  return out;
}

DecodedVars decode(const BoundParams& params, const ModelConfig& config, Var z, Var proposal) {
  const Var input = diff::concat_cols(diff::batch_to_rows(z), proposal);
  Var h = hidden_layer(params, config, "dec.fc1", input);
  h = hidden_layer(params, config, "dec.fc2", h);
  DecodedVars out;
  out.y_hat = dense(params, "dec.y_hat", h);
  const Var lower = in_layer("dec.delta_l", [&] { return diff::softplus(dense(params, "dec.delta_l", h)); });
  const Var upper = in_layer("dec.delta_h", [&] { return diff::softplus(dense(params, "dec.delta_h", h)); });
  out.q_l = diff::sub(out.y_hat, lower);
  out.q_h = diff::add(out.y_hat, upper);
  return out;
}

ForwardVars forward(diff::Graph& graph, const BoundParams& params, const ModelConfig& config,
                    const BatchInput& batch) {
  const int n = batch.size();
  if (batch.feat_b.shape().rows != n || batch.proposal.shape() != Shape{1, n, 4} ||
      batch.eps.shape() != Shape{n, 4, 1}) {
    throw ShapeError(fmt::format(
        "batch shapes disagree: feat_a {} feat_b {} proposal {} eps {}",
        batch.feat_a.shape().str(), batch.feat_b.shape().str(), batch.proposal.shape().str(),
        batch.eps.shape().str()));
  }
  ForwardVars f;
  f.latent_a = encode(params, config, graph.constant(batch.feat_a), Modality::A);
  f.latent_b = encode(params, config, graph.constant(batch.feat_b), Modality::B);
  f.v_a = diff::add_identity(gauss::cov_from_chol(f.latent_a.chol), gauss::kIdentityRegularization);
  f.v_b = diff::add_identity(gauss::cov_from_chol(f.latent_b.chol), gauss::kIdentityRegularization);

  const std::array<Var, 2> mus{f.latent_a.mu, f.latent_b.mu};
  const std::array<Var, 2> covs{f.v_a, f.v_b};
  const gauss::FusedVars fused = gauss::gaussian_product(mus, covs);
  f.mu_joint = fused.mu_joint;
  f.v_joint = fused.v_joint;
  int rep = 0;
  f.z = gauss::reparam_sample(f.mu_joint, f.v_joint, graph.constant(batch.eps), &rep);
  f.repaired = fused.repaired + rep;

  const DecodedVars d = decode(params, config, f.z, graph.constant(batch.proposal));
  f.y_hat = d.y_hat;
  f.q_l = d.q_l;
  f.q_h = d.q_h;
  return f;
}

double kl_divergence(const gauss::Vec4& mu, const gauss::Mat4& v) {
  const double d = v.determinant();
  if (!(d > 0.0)) throw NumericError(fmt::format("kl_divergence: non-positive determinant {}", d));
  return 0.5 * (v.trace() + mu.squaredNorm() - ModelConfig::kLatentDim - std::log(d));
}

Var kl_divergence(Var mu, Var v) {
  const Var quad = diff::matmul(diff::transpose(mu), mu);
  const Var inner = diff::sub(diff::add(diff::trace(v), quad), diff::logdet(v));
  return diff::scale(diff::add_scalar(inner, -ModelConfig::kLatentDim), 0.5);
}

std::vector<info::InfoReport> information(const ForwardVars& fwd) {
  const int n = fwd.v_joint.shape().batch;
  std::vector<info::InfoReport> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    out.push_back(info::analyze(fwd.v_a.value().mat(k), fwd.v_b.value().mat(k),
                                fwd.v_joint.value().mat(k)));
  }
  return out;
}

// --- Model -----------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(config), params_(ModelParams::init(config)) {}

Model::Model(ModelConfig config, ModelParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  params_.validate(config_);
}

gauss::LatentGaussian Model::encode(std::span<const double> features, Modality which) const {
  diff::Graph g;
  const BoundParams bound(g, params_, false);
  const LatentVars lv = model::encode(bound, config_, g.constant(row_tensor(features)), which);
  gauss::LatentGaussian out;
  out.mu = lv.mu.value().mat(0);
  out.chol = lv.chol.value().mat(0);
  return out;
}

FusedSample Model::fuse_and_sample(const gauss::LatentGaussian& a,
                                   const gauss::LatentGaussian& b, const gauss::Vec4& eps) {
  const gauss::Mat4 eye = gauss::Mat4::Identity();
  const gauss::Mat4 v_a = gauss::cov_from_chol(a.chol) + gauss::kIdentityRegularization * eye;
  const gauss::Mat4 v_b = gauss::cov_from_chol(b.chol) + gauss::kIdentityRegularization * eye;
  const std::array<gauss::GaussianParams, 2> factors{gauss::GaussianParams{a.mu, v_a},
                                                     gauss::GaussianParams{b.mu, v_b}};
  const gauss::ProductResult prod = gauss::gaussian_product(factors);

  FusedSample out;
  out.posterior.mu_joint = prod.mu_joint;
  out.posterior.v_joint = prod.v_joint;
  out.posterior.repaired = prod.repaired;
  const info::InfoReport rep = info::analyze(v_a, v_b, prod.v_joint);
  out.posterior.h_a = rep.h_a_bits;
  out.posterior.h_b = rep.h_b_bits;
  out.posterior.mi = rep.mi_bits;
  out.posterior.nmi = rep.nmi;
  out.z = gauss::reparam_sample(prod.mu_joint, prod.v_joint, eps);
  return out;
}

conformal::PredictionSet Model::decode(const gauss::Vec4& z,
                                       std::span<const double> proposal) const {
  if (proposal.size() != ModelConfig::kProposalDim) {
    throw ShapeError(fmt::format("decode: proposal must have 4 entries, got {}", proposal.size()));
  }
  diff::Graph g;
  const BoundParams bound(g, params_, false);
  Tensor zt(Shape{1, 4, 1});
  for (int i = 0; i < 4; ++i) zt[static_cast<std::size_t>(i)] = z[i];
  const DecodedVars d =
      model::decode(bound, config_, g.constant(std::move(zt)), g.constant(row_tensor(proposal)));
  return {d.y_hat.value().matrix(0), d.q_l.value().matrix(0), d.q_h.value().matrix(0)};
}

BatchOutput Model::predict(const BatchInput& batch) const {
  diff::Graph g;
  const BoundParams bound(g, params_, false);
  const ForwardVars f = forward(g, bound, config_, batch);
  BatchOutput out;
  out.prediction = {f.y_hat.value().matrix(0), f.q_l.value().matrix(0), f.q_h.value().matrix(0)};
  out.info = information(f);
  return out;
}

}  // namespace mmconf::model
