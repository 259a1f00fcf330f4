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

#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "mmconf/error.hpp"
#include "mmconf/synthdata.hpp"
#include "mmconf/trainer.hpp"
#include "support.hpp"

using namespace mmconf;
using diff::Var;

namespace {

std::vector<data::SceneSample> dataset(int n, std::uint64_t seed = 1) {
  data::DataConfig c;
  c.n_samples = n;
  c.seed = seed;
  return data::generate_dataset(c);
}

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.hidden = 8;
  return c;
}

train::TrainConfig quick(int epochs) {
  train::TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  return c;
}

struct Fixture {
  std::vector<data::SceneSample> samples = dataset(4, 5);
  model::BatchInput batch;
  Tensor targets;

  Fixture() {
    Rng rng(3);
    std::vector<double> eps(16);
    for (double& e : eps) e = rng.normal();
    const std::vector<std::size_t> idx{0, 1, 2, 3};
    batch = train::make_batch(samples, idx, eps, &targets);
  }
};

double max_param_gradient_error(const model::ModelConfig& mc, const train::TrainConfig& tc,
                                const Fixture& fx, double p_cov_avg,
                                Var (*pick)(const train::LossVars&)) {
  const model::ModelParams params = model::ModelParams::init(mc);
  std::vector<Tensor> inputs;
  for (const auto& e : params.entries()) inputs.push_back(e.value);
  conformal::CalibrationState state;
  state.reset(p_cov_avg);
  const auto report = diff::grad_check(
      [&](diff::Graph& g, std::span<const Var> leaves) {
        const model::BoundParams bound(params, {leaves.begin(), leaves.end()});
        const model::ForwardVars f = model::forward(g, bound, mc, fx.batch);
        const Var y = g.constant(fx.targets);
        const train::LossVars loss = train::total_loss(g, f, y, state, tc, 1.3, 0.4);
        return pick(loss);
      },
      inputs, 1e-5, 1e-4);
  return report.max_error;
}

}  // namespace

TEST_CASE("loss composition arithmetic") {
  CHECK(train::compose_total(0.1, 0.5, 0.2, 1.0, 0.3) == doctest::Approx(1.6005).epsilon(1e-12));
  CHECK(train::compose_total(2.0, 0.0, 0.0, 0.0, 0.0) == 2.0);
}

TEST_CASE("perfect predictions with a standard posterior give zero loss") {
  diff::Graph g;
  Rng rng(1);
  const Tensor y = testing::random_tensor(rng, Shape{1, 3, 24});
  model::ForwardVars f;
  f.y_hat = g.constant(y);
  f.q_l = g.constant(y);
  f.q_h = g.constant(y);
  f.mu_joint = g.constant(Tensor(Shape{3, 4, 1}));
  Tensor eye(Shape{3, 4, 4});
  for (int b = 0; b < 3; ++b) eye.mat(b).setIdentity();
  f.v_joint = g.constant(eye);
  for (const double pcov : {0.5, 0.9, 0.95}) {
    conformal::CalibrationState state;
    state.reset(pcov);
    const train::LossVars loss = train::total_loss(g, f, g.constant(y), state, train::TrainConfig{}, 0.0, 0.5);
    CHECK(loss.total.item() == 0.0);
  }
}

TEST_CASE("graph loss equals the sum of independently computed components") {
  Fixture fx;
  const model::ModelConfig mc = tiny_model();
  const model::Model m(mc);
  diff::Graph g;
  const model::BoundParams bound(g, m.params(), false);
  const model::ForwardVars f = model::forward(g, bound, mc, fx.batch);
  conformal::CalibrationState state;
  state.reset(0.6);
  const train::TrainConfig tc;
  const double u = 1.7;
  const double nmi = 0.35;
  const train::LossVars loss = train::total_loss(g, f, g.constant(fx.targets), state, tc, u, nmi);

  const RowMatrix yhat = f.y_hat.value().mat(0);
  const RowMatrix ql = f.q_l.value().mat(0);
  const RowMatrix qh = f.q_h.value().mat(0);
  const RowMatrix y = fx.targets.mat(0);
  double sl1 = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double d = std::abs(yhat.data()[i] - y.data()[i]);
    sl1 += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  sl1 /= static_cast<double>(y.size());
  double kl = 0.0;
  for (int b = 0; b < 4; ++b) {
    kl += model::kl_divergence(gauss::Vec4(f.mu_joint.value().matrix(b)),
                               gauss::Mat4(f.v_joint.value().matrix(b)));
  }
  kl /= 4.0;
  const double is = conformal::interval_score(y, ql, qh, tc.conformal.alpha());
  const double cc = conformal::comcal(nmi, conformal::cal_objective(y, ql, qh, 0.6, 0.9),
                                      conformal::sharp_objective(ql, qh, 0.9));
  CHECK(loss.smoothl1.item() == doctest::Approx(sl1).epsilon(1e-12));
  CHECK(loss.kl.item() == doctest::Approx(kl).epsilon(1e-12));
  CHECK(loss.total.item() ==
        doctest::Approx(train::compose_total(sl1, u, kl, is, cc)).epsilon(1e-12));
  const train::LossBreakdown b = train::breakdown(loss, u, nmi);
  CHECK(b.intscore == doctest::Approx(is));
  CHECK(b.u == u);
}

TEST_CASE("loss gradients against central differences on a 4-sample batch") {
  Fixture fx;
  const model::ModelConfig mc = tiny_model();
  train::TrainConfig tc;
  using Pick = Var (*)(const train::LossVars&);
  const std::vector<std::pair<const char*, Pick>> parts{
      {"smoothl1", [](const train::LossVars& l) { return l.smoothl1; }},
      {"kl", [](const train::LossVars& l) { return l.kl; }},
      {"intscore", [](const train::LossVars& l) { return l.intscore; }},
      {"cal", [](const train::LossVars& l) { return l.cal; }},
      {"sharp", [](const train::LossVars& l) { return l.sharp; }},
      {"comcal", [](const train::LossVars& l) { return l.comcal; }},
      {"total", [](const train::LossVars& l) { return l.total; }},
  };
  for (const double pcov : {0.5, 0.97}) {
    for (const auto& [name, pick] : parts) {
      CAPTURE(name);
      CAPTURE(pcov);
      CHECK(max_param_gradient_error(mc, tc, fx, pcov, pick) <= 1e-4);
    }
  }
  tc.nmi_grad = true;
  tc.u_grad = true;
  CHECK(max_param_gradient_error(mc, tc, fx, 0.5, parts.back().second) <= 1e-4);
}

TEST_CASE("split is a deterministic partition") {
  const auto samples = dataset(101);
  const train::Split a = train::split(samples, 0.2, 7);
  const train::Split b = train::split(samples, 0.2, 7);
  CHECK(a.val.size() == 20);
  CHECK(a.train.size() == 81);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  const train::Split c = train::split(samples, 0.2, 8);
  CHECK_FALSE(c.val == a.val);
  std::vector<data::SceneSample> all = a.train;
  all.insert(all.end(), a.val.begin(), a.val.end());
  CHECK(all.size() == samples.size());
  for (const auto& s : samples) CHECK(std::count(all.begin(), all.end(), s) == 1);
}

TEST_CASE("make_batch layout") {
  const auto samples = dataset(5);
  const std::vector<std::size_t> idx{4, 1};
  const std::vector<double> eps{1, 2, 3, 4, 5, 6, 7, 8};
  Tensor y;
  const model::BatchInput b = train::make_batch(samples, idx, eps, &y);
  CHECK(b.size() == 2);
  CHECK(b.feat_a.shape() == Shape{1, 2, 32});
  CHECK(b.feat_b(0, 1, 5) == samples[1].feat_b[5]);
  CHECK(b.proposal(0, 0, 2) == samples[4].proposal[2]);
  CHECK(b.eps(1, 3, 0) == 8.0);
  CHECK(y(0, 0, 23) == samples[4].corners[23]);
  CHECK_THROWS_AS(train::make_batch(samples, idx, std::vector<double>(3), nullptr), ShapeError);
}

TEST_CASE("training is reproducible and reports sane metrics") {
  const auto samples = dataset(400, 2);
  const train::TrainConfig tc = quick(3);
  int calls = 0;
  const train::TrainResult a =
      train::train(samples, tiny_model(), tc, [&](const train::EpochMetrics&) { ++calls; });
  const train::TrainResult b = train::train(samples, tiny_model(), tc, nullptr);
  CHECK(calls == 3);
  REQUIRE(a.metrics.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.metrics[i].epoch == static_cast<int>(i) + 1);
    CHECK(a.metrics[i].total_loss == b.metrics[i].total_loss);
    CHECK(a.metrics[i].val_mau == b.metrics[i].val_mau);
    CHECK(a.metrics[i].train_coverage >= 0.0);
    CHECK(a.metrics[i].train_coverage <= 1.0);
    CHECK(a.metrics[i].val_coverage >= 0.0);
    CHECK(a.metrics[i].val_coverage <= 1.0);
    CHECK(a.metrics[i].mean_nmi >= 0.0);
    CHECK(a.metrics[i].mean_nmi <= 1.0);
  }
  for (std::size_t k = 0; k < a.model.params().entries().size(); ++k) {
    CHECK(testing::vec(a.model.params().entries()[k].value.values()) ==
          testing::vec(b.model.params().entries()[k].value.values()));
  }
}

TEST_CASE("training lowers the loss") {
  const auto samples = dataset(1000, 3);
  train::TrainConfig tc = quick(6);
  const train::TrainResult r = train::train(samples, model::ModelConfig{}, tc, nullptr);
  CHECK(r.metrics.back().total_loss < r.metrics.front().total_loss);
}

TEST_CASE("zero learning rate leaves parameters and validation metrics unchanged") {
  const auto samples = dataset(300, 4);
  train::TrainConfig tc = quick(3);
  tc.learning_rate = 0.0;
  const train::TrainResult r = train::train(samples, tiny_model(), tc, nullptr);
  const model::ModelParams init = model::ModelParams::init(tiny_model());
  for (std::size_t k = 0; k < init.entries().size(); ++k) {
    CHECK(testing::vec(r.model.params().entries()[k].value.values()) ==
          testing::vec(init.entries()[k].value.values()));
  }
  for (const auto& m : r.metrics) {
    CHECK(m.val_coverage == r.metrics.front().val_coverage);
    CHECK(m.val_mau == r.metrics.front().val_mau);
  }
}

TEST_CASE("divergence aborts with the last good model") {
  const auto samples = dataset(200, 5);
  train::TrainConfig tc = quick(2);
  tc.divergence_threshold = 1e-3;
  try {
    (void)train::train(samples, tiny_model(), tc, nullptr);
    FAIL("expected TrainingDiverged");
  } catch (const train::TrainingDiverged& e) {
    CHECK(e.epoch() == 1);
    const model::ModelParams init = model::ModelParams::init(tiny_model());
    CHECK(testing::vec(e.last_good().params().at("dec.y_hat.weight").values()) ==
          testing::vec(init.at("dec.y_hat.weight").values()));
    CHECK(std::string(e.what()).find("intscore") != std::string::npos);
  }
}

TEST_CASE("training preconditions") {
  const auto samples = dataset(50);
  CHECK_THROWS_AS(train::train(samples, tiny_model(), quick(1), nullptr), ConfigError);
  train::TrainConfig bad = quick(1);
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = quick(1);
  bad.val_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  model::ModelConfig wrong = tiny_model();
  wrong.feat_dim_a = 16;
  CHECK_THROWS_AS(train::train(dataset(100), wrong, quick(1), nullptr), ShapeError);
}

TEST_CASE("evaluation of exact predictions") {
  const auto samples = dataset(30);
  RowMatrix truth(30, 24);
  for (int r = 0; r < 30; ++r)
    for (int k = 0; k < 24; ++k) truth(r, k) = samples[static_cast<std::size_t>(r)].corners[static_cast<std::size_t>(k)];
  const train::EvalReport rep = train::evaluate_predictions(samples, {truth, truth, truth});
  CHECK(rep.num_objects == 30);
  CHECK(rep.precision_point == 1.0);
  CHECK(rep.precision_uncertainty == 1.0);
  CHECK(rep.mau == 0.0);
  CHECK(rep.entry_coverage == 1.0);
  CHECK(rep.joint_coverage == 1.0);
  CHECK(rep.objects.size() == 30);
  CHECK(rep.objects[3].iou_point == doctest::Approx(1.0));
  CHECK_THROWS_AS(train::evaluate_predictions(samples, {truth.topRows(3), truth, truth}), ShapeError);
  CHECK_THROWS_AS(train::evaluate_predictions({}, {RowMatrix(0, 24), RowMatrix(0, 24), RowMatrix(0, 24)}),
                  Error);
}

TEST_CASE("uncertainty-aware precision never falls below point precision") {
  const auto samples = dataset(60);
  Rng rng(9);
  for (int t = 0; t < 40; ++t) {
    RowMatrix yhat(60, 24);
    RowMatrix lo(60, 24);
    RowMatrix hi(60, 24);
    const double bias = rng.uniform(-0.5, 0.5);
    for (int r = 0; r < 60; ++r) {
      for (int k = 0; k < 24; ++k) {
        const double y = samples[static_cast<std::size_t>(r)].corners[static_cast<std::size_t>(k)];
        yhat(r, k) = y + bias + 0.3 * rng.normal();
        lo(r, k) = yhat(r, k) - rng.uniform(0.0, 1.0);
        hi(r, k) = yhat(r, k) + rng.uniform(0.0, 1.0);
      }
    }
    const train::EvalReport rep = train::evaluate_predictions(samples, {yhat, lo, hi});
    CHECK(rep.precision_uncertainty >= rep.precision_point);
    CHECK(rep.precision_uncertainty >= rep.precision_uncertainty_box_only);
    CHECK(rep.mau == doctest::Approx(rep.mean_width));
  }
}

TEST_CASE("model evaluation uses the posterior mean") {
  const auto samples = dataset(20);
  const model::Model m(tiny_model());
  const train::EvalReport a = train::evaluate(m, samples);
  const train::EvalReport b = train::evaluate(m, samples);
  CHECK(a.mau == b.mau);
  CHECK(a.mean_nmi >= 0.0);
  CHECK(a.mean_nmi <= 1.0);
  CHECK_THROWS_AS(train::evaluate(m, {}), Error);
}

TEST_CASE("metrics file round trip and errors") {
  testing::TempDir dir("metrics");
  std::vector<train::EpochMetrics> rows(3);
  for (int i = 0; i < 3; ++i) {
    auto& m = rows[static_cast<std::size_t>(i)];
    m.epoch = i + 1;
    m.total_loss = 1.0 / 3.0 + i;
    m.smoothl1 = 0.1 * i;
    m.kl = std::exp(-i);
    m.mean_u = 2.0 - 0.1 * i;
    m.mean_nmi = 0.3 + 0.01 * i;
    m.train_coverage = 0.85;
    m.val_coverage = 0.875;
    m.val_mau = 1e-7 * (i + 1);
  }
  train::write_metrics_csv(dir / "m.csv", rows);
  const auto back = train::read_metrics_csv(dir / "m.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].epoch == rows[i].epoch);
    CHECK(back[i].total_loss == rows[i].total_loss);
    CHECK(back[i].kl == rows[i].kl);
    CHECK(back[i].val_mau == rows[i].val_mau);
  }
  {
    std::ofstream f(dir / "bad.csv");
    f << train::kMetricsHeader << "\n1,2,3,4,5,6,7,8,9,10,11\n2,2,3,x,5,6,7,8,9,10,11\n";
  }
  try {
    (void)train::read_metrics_csv(dir / "bad.csv");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::ofstream(dir / "short.csv") << train::kMetricsHeader << "\n1,2,3\n";
  CHECK_THROWS_AS(train::read_metrics_csv(dir / "short.csv"), IoError);
  std::ofstream(dir / "header.csv") << "a,b\n";
  CHECK_THROWS_AS(train::read_metrics_csv(dir / "header.csv"), IoError);
}

TEST_CASE("pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 6, 8, 10};
  const std::vector<double> down{5, 4, 3, 2, 1};
  const std::vector<double> flat{3, 3, 3, 3, 3};
  CHECK(train::pearson(x, up) == doctest::Approx(1.0));
  CHECK(train::pearson(x, down) == doctest::Approx(-1.0));
  CHECK(std::isnan(train::pearson(x, flat)));
  CHECK_THROWS_AS(train::pearson(x, std::vector<double>{1.0}), ShapeError);
  const std::vector<double> y{1.0, 3.0, 2.0, 5.0, 4.0};
  // sample correlation computed by hand: sxy = 8, sxx = syy = 10
  CHECK(train::pearson(x, y) == doctest::Approx(0.8));
}
