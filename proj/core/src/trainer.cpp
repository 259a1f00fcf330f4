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

#include "mmconf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "mmconf/random.hpp"

namespace mmconf::train {

using diff::Var;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError(fmt::format("epochs must be >= 0, got {}", epochs));
  if (batch_size < 2) throw ConfigError(fmt::format("batch_size must be >= 2, got {}", batch_size));
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError(fmt::format("val_fraction must lie in (0, 1), got {}", val_fraction));
  }
  if (reparam_samples < 1) throw ConfigError("reparam_samples must be >= 1");
  if (!(smooth_l1_beta > 0.0)) throw ConfigError("smooth_l1_beta must be positive");
  conformal.validate();
}

double compose_total(double smoothl1, double u, double kl, double intscore, double comcal) {
  return smoothl1 * (1.0 + 0.01 * u) + kl + intscore + comcal;
}

LossVars total_loss(diff::Graph& graph, const model::ForwardVars& fwd, Var y,
                    const conformal::CalibrationState& state, const TrainConfig& config,
                    double u, double nmi) {
  (void)graph;
  const conformal::ConformalConfig& cc = config.conformal;
  LossVars out;
  out.smoothl1 = diff::mean(diff::smooth_l1(diff::sub(fwd.y_hat, y), config.smooth_l1_beta));
  Var weighted;
  if (config.u_grad) {
    const Var weight =
        diff::add_scalar(diff::scale(conformal::uncertainty_metric(fwd.q_l, fwd.q_h), 0.01), 1.0);
    weighted = diff::mul_scalar(out.smoothl1, weight);
  } else {
    weighted = diff::scale(out.smoothl1, 1.0 + 0.01 * u);
  }
  out.kl = diff::mean(model::kl_divergence(fwd.mu_joint, fwd.v_joint));
  out.intscore = conformal::interval_score(y, fwd.q_l, fwd.q_h, cc.alpha());
  out.cal = conformal::cal_objective(y, fwd.q_l, fwd.q_h, state.p_cov_avg, cc.p);
  out.sharp = conformal::sharp_objective(fwd.q_l, fwd.q_h, cc.p);
  if (config.nmi_grad) {
    const Var per_sample = info::nmi(info::mutual_information(fwd.v_a, fwd.v_b, fwd.v_joint),
                                     info::entropy(fwd.v_a), info::entropy(fwd.v_b));
    out.comcal = conformal::comcal(diff::mean(per_sample), out.cal, out.sharp);
  } else {
    out.comcal = conformal::comcal(nmi, out.cal, out.sharp);
  }
  out.total = diff::add(diff::add(weighted, out.kl), diff::add(out.intscore, out.comcal));
  return out;
}

LossBreakdown breakdown(const LossVars& loss, double u, double nmi) {
  LossBreakdown b;
  b.total = loss.total.item();
  b.smoothl1 = loss.smoothl1.item();
  b.kl = loss.kl.item();
  b.intscore = loss.intscore.item();
  b.comcal = loss.comcal.item();
  b.cal = loss.cal.item();
  b.sharp = loss.sharp.item();
  b.u = u;
  b.nmi = nmi;
  return b;
}

Split split(std::span<const data::SceneSample> samples, double val_fraction,
            std::uint64_t seed) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  rng.shuffle(order.begin(), order.end());
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(samples.size())));
  Split out;
  const std::size_t n_train = samples.size() - n_val;
  out.train.reserve(n_train);
  out.val.reserve(n_val);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.train : out.val).push_back(samples[order[i]]);
  }
  return out;
}

model::BatchInput make_batch(std::span<const data::SceneSample> samples,
                             std::span<const std::size_t> indices, std::span<const double> eps,
                             Tensor* targets) {
  const auto n = static_cast<int>(indices.size());
  if (n == 0) throw ShapeError("make_batch: empty batch");
  if (eps.size() != indices.size() * 4) {
    throw ShapeError(fmt::format("make_batch: {} noise values for {} samples", eps.size(), n));
  }
  const auto& first = samples[indices[0]];
  const auto da = static_cast<int>(first.feat_a.size());
  const auto db = static_cast<int>(first.feat_b.size());
  model::BatchInput b;
  b.feat_a = Tensor(Shape{1, n, da});
  b.feat_b = Tensor(Shape{1, n, db});
  b.proposal = Tensor(Shape{1, n, 4});
  b.eps = Tensor(Shape{n, 4, 1}, std::vector<double>(eps.begin(), eps.end()));
  if (targets) *targets = Tensor(Shape{1, n, data::kCornerValues});
  for (int r = 0; r < n; ++r) {
    const data::SceneSample& s = samples[indices[static_cast<std::size_t>(r)]];
    if (static_cast<int>(s.feat_a.size()) != da || static_cast<int>(s.feat_b.size()) != db) {
      throw ShapeError("make_batch: samples disagree on feature dimensions");
    }
    for (int c = 0; c < da; ++c) b.feat_a(0, r, c) = s.feat_a[static_cast<std::size_t>(c)];
    for (int c = 0; c < db; ++c) b.feat_b(0, r, c) = s.feat_b[static_cast<std::size_t>(c)];
    for (int c = 0; c < 4; ++c) b.proposal(0, r, c) = s.proposal[static_cast<std::size_t>(c)];
    if (targets) {
      for (int c = 0; c < data::kCornerValues; ++c) {
        (*targets)(0, r, c) = s.corners[static_cast<std::size_t>(c)];
      }
    }
  }
  return b;
}

namespace {

class Adam {
 public:
  Adam(const model::ModelParams& params, const TrainConfig& c) : config_(c) {
    for (const auto& e : params.entries()) {
      m_.emplace_back(e.value.shape());
      v_.emplace_back(e.value.shape());
    }
  }

  void step(model::ModelParams& params, std::span<const Var> leaves) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    auto& entries = params.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Tensor& g = leaves[i].grad();
      Tensor& w = entries[i].value;
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
        v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        w[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.adam_eps);
      }
    }
  }

 private:
  const TrainConfig& config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int t_ = 0;
};

struct Accumulator {
  double total = 0, smoothl1 = 0, kl = 0, intscore = 0, comcal = 0, u = 0, nmi = 0;
  int batches = 0;

  void add(const LossBreakdown& b) {
    total += b.total;
    smoothl1 += b.smoothl1;
    kl += b.kl;
    intscore += b.intscore;
    comcal += b.comcal;
    u += b.u;
    nmi += b.nmi;
    ++batches;
  }
};

}  // namespace

TrainResult train(std::span<const data::SceneSample> samples,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (samples.size() < 2 * static_cast<std::size_t>(config.batch_size)) {
    throw ConfigError(fmt::format("need at least {} samples for batch size {}, got {}",
                                  2 * config.batch_size, config.batch_size, samples.size()));
  }
  for (const auto& s : samples) {
    if (static_cast<int>(s.feat_a.size()) != model_config.feat_dim_a ||
        static_cast<int>(s.feat_b.size()) != model_config.feat_dim_b) {
      throw ShapeError(fmt::format("data feature sizes {}/{} do not match model {}/{}",
                                   s.feat_a.size(), s.feat_b.size(), model_config.feat_dim_a,
                                   model_config.feat_dim_b));
    }
  }
  const Split parts = split(samples, config.val_fraction, config.seed);
  if (parts.train.size() < static_cast<std::size_t>(config.batch_size) || parts.val.empty()) {
    throw ConfigError("train/validation split leaves too few samples");
  }

  model::Model current(model_config);
  model::Model last_good = current;
  Adam adam(current.params(), config);
  Rng rng(mix_seed(config.seed, 0x747261696eULL));
  std::vector<std::size_t> order(parts.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t n_batches = parts.train.size() / batch;  // remainder dropped each epoch
  const int draws = config.reparam_samples;

  conformal::CalibrationState state;
  std::vector<EpochMetrics> metrics;
  std::vector<double> eps(batch * 4);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    state.reset(config.conformal.p);
    Accumulator acc;

    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::span<const std::size_t> idx(order.data() + bi * batch, batch);
      try {
        diff::Graph g;
        const model::BoundParams bound(g, current.params(), true);
        Var total;
        LossBreakdown summary;
        conformal::PredictionSet first_prediction;
        for (int d = 0; d < draws; ++d) {
          for (double& e : eps) e = rng.normal();
          Tensor targets;
          const model::BatchInput input = make_batch(parts.train, idx, eps, &targets);
          const model::ForwardVars fwd = model::forward(g, bound, model_config, input);
          const Var y = g.constant(targets);

          const RowMatrix q_l = fwd.q_l.value().mat(0);
          const RowMatrix q_h = fwd.q_h.value().mat(0);
          const double u = conformal::uncertainty_metric(q_l, q_h);
          double nmi = 0.0;
          for (const info::InfoReport& r : model::information(fwd)) nmi += r.nmi;
          nmi /= static_cast<double>(batch);

          const LossVars loss = total_loss(g, fwd, y, state, config, u, nmi);
          const LossBreakdown b = breakdown(loss, u, nmi);
          total = total.valid() ? diff::add(total, loss.total) : loss.total;
          if (d == 0) {
            summary = b;
            first_prediction = {targets.mat(0), q_l, q_h};
          }
        }
        if (draws > 1) total = diff::scale(total, 1.0 / draws);
        summary.total = total.item();
        if (!std::isfinite(summary.total) || std::abs(summary.total) > config.divergence_threshold) {
          throw TrainingDiverged(
              fmt::format("training diverged at epoch {} batch {}: total loss {} "
                          "(smoothl1 {}, kl {}, intscore {}, comcal {})",
                          epoch, bi, summary.total, summary.smoothl1, summary.kl,
                          summary.intscore, summary.comcal),
              last_good, epoch);
        }
        g.backward(total);
        adam.step(current.params(), bound.vars());

        // y_hat slot carries the targets here
        state = conformal::update_coverage(state, first_prediction.y_hat, first_prediction.q_l,
                                           first_prediction.q_h);
        state.u_last = summary.u;
        state.nmi_last = summary.nmi;
        acc.add(summary);
      } catch (const NumericError& e) {
        throw TrainingDiverged(
            fmt::format("training diverged at epoch {} batch {}: {}", epoch, bi, e.what()),
            last_good, epoch);
      }
    }

    const EvalReport val = evaluate(current, parts.val);
    EpochMetrics m;
    m.epoch = epoch;
    const double nb = std::max(1, acc.batches);
    m.total_loss = acc.total / nb;
    m.smoothl1 = acc.smoothl1 / nb;
    m.kl = acc.kl / nb;
    m.intscore = acc.intscore / nb;
    m.comcal = acc.comcal / nb;
    m.mean_u = acc.u / nb;
    m.mean_nmi = acc.nmi / nb;
    m.train_coverage = state.p_cov_avg;
    m.val_coverage = val.entry_coverage;
    m.val_mau = val.mau;
    metrics.push_back(m);
    if (!current.params().entries().empty()) {
      for (const auto& e : current.params().entries()) {
        if (!e.value.all_finite()) {
          throw TrainingDiverged(fmt::format("non-finite parameters after epoch {}", epoch),
                                 last_good, epoch);
        }
      }
    }
    last_good = current;
    if (on_epoch) on_epoch(m);
  }
  return TrainResult{std::move(current), std::move(metrics)};
}

}  // namespace mmconf::train
