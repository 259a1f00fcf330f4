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
#include <numbers>

#include "doctest.h"
#include "json.hpp"
#include "mmconf/error.hpp"
#include "mmconf/model.hpp"
#include "support.hpp"

using namespace mmconf;
using gauss::Mat4;
using gauss::Vec4;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.feat_dim_a = 5;
  c.feat_dim_b = 3;
  c.hidden = 7;
  c.seed = 4;
  return c;
}

model::BatchInput random_batch(Rng& rng, const model::ModelConfig& c, int n) {
  model::BatchInput b;
  b.feat_a = testing::random_tensor(rng, Shape{1, n, c.feat_dim_a});
  b.feat_b = testing::random_tensor(rng, Shape{1, n, c.feat_dim_b});
  b.proposal = testing::random_tensor(rng, Shape{1, n, 4}, 0.2, 0.8);
  b.eps = Tensor(Shape{n, 4, 1});
  for (std::size_t i = 0; i < b.eps.size(); ++i) b.eps[i] = rng.normal();
  return b;
}

}  // namespace

TEST_CASE("parameter layout and initialisation") {
  const model::ModelConfig c = small_config();
  const auto layout = model::ModelParams::layout(c);
  const model::ModelParams p = model::ModelParams::init(c);
  REQUIRE(p.entries().size() == layout.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    CHECK(p.entries()[i].name == layout[i].first);
    CHECK(p.entries()[i].value.shape() == layout[i].second);
    count += layout[i].second.size();
  }
  CHECK(p.parameter_count() == count);
  CHECK(p.at("enc_a.fc1.weight").shape() == Shape{1, 5, 7});
  CHECK(p.at("enc_b.chol.weight").shape() == Shape{1, 7, 10});
  CHECK(p.at("dec.fc1.weight").shape() == Shape{1, 8, 7});
  CHECK(p.at("dec.delta_h.bias").shape() == Shape{1, 1, 24});
  const double bound = 1.0 / std::sqrt(5.0);
  for (const double w : p.at("enc_a.fc1.weight").values()) CHECK(std::abs(w) <= bound);
  CHECK_NOTHROW(p.validate(c));

  const model::ModelParams same = model::ModelParams::init(c);
  CHECK(testing::vec(same.at("dec.y_hat.weight").values()) ==
        testing::vec(p.at("dec.y_hat.weight").values()));
  model::ModelConfig other = c;
  other.seed = 5;
  CHECK(testing::vec(model::ModelParams::init(other).at("dec.y_hat.weight").values()) !=
        testing::vec(p.at("dec.y_hat.weight").values()));
  CHECK_THROWS_AS((void)p.at("nope"), Error);
}

TEST_CASE("forward pass shapes and bound ordering") {
  const model::ModelConfig c = small_config();
  const model::ModelParams params = model::ModelParams::init(c);
  Rng rng(1);
  const model::BatchInput batch = random_batch(rng, c, 6);
  diff::Graph g;
  const model::BoundParams bound(g, params, false);
  const model::ForwardVars f = model::forward(g, bound, c, batch);
  CHECK(f.latent_a.mu.shape() == Shape{6, 4, 1});
  CHECK(f.latent_a.chol.shape() == Shape{6, 4, 4});
  CHECK(f.v_joint.shape() == Shape{6, 4, 4});
  CHECK(f.z.shape() == Shape{6, 4, 1});
  CHECK(f.y_hat.shape() == Shape{1, 6, 24});
  CHECK(f.repaired == 0);
  for (std::size_t i = 0; i < f.y_hat.value().size(); ++i) {
    CHECK(f.q_l.value()[i] < f.y_hat.value()[i]);
    CHECK(f.y_hat.value()[i] < f.q_h.value()[i]);
  }
  for (int k = 0; k < 6; ++k) {
    gauss::LatentGaussian lat;
    lat.mu = f.latent_b.mu.value().matrix(k);
    lat.chol = f.latent_b.chol.value().matrix(k);
    CHECK_NOTHROW(lat.validate());
  }
  model::BatchInput wrong = batch;
  wrong.feat_a = Tensor(Shape{1, 6, 4});
  diff::Graph h;
  const model::BoundParams bound_h(h, params, false);
  CHECK_THROWS_AS(model::forward(h, bound_h, c, wrong), ShapeError);
}

TEST_CASE("forward is a pure function of its inputs") {
  const model::ModelConfig c = small_config();
  const model::Model m(c);
  Rng rng(2);
  const model::BatchInput batch = random_batch(rng, c, 5);
  const model::BatchOutput a = m.predict(batch);
  const model::BatchOutput b = m.predict(batch);
  CHECK(a.prediction.y_hat == b.prediction.y_hat);
  CHECK(a.prediction.q_l == b.prediction.q_l);
  CHECK(a.prediction.q_h == b.prediction.q_h);
  REQUIRE(a.info.size() == 5);
  CHECK(a.info[0].nmi == b.info[0].nmi);
}

TEST_CASE("single-object path matches the batched path") {
  const model::ModelConfig c = small_config();
  const model::Model m(c);
  Rng rng(3);
  const model::BatchInput batch = random_batch(rng, c, 4);
  const model::BatchOutput out = m.predict(batch);
  for (int k = 0; k < 4; ++k) {
    const auto fa = batch.feat_a.values().subspan(static_cast<std::size_t>(k * c.feat_dim_a),
                                                  static_cast<std::size_t>(c.feat_dim_a));
    const auto fb = batch.feat_b.values().subspan(static_cast<std::size_t>(k * c.feat_dim_b),
                                                  static_cast<std::size_t>(c.feat_dim_b));
    const gauss::LatentGaussian la = m.encode(fa, model::Modality::A);
    const gauss::LatentGaussian lb = m.encode(fb, model::Modality::B);
    Vec4 eps;
    for (int i = 0; i < 4; ++i) eps(i) = batch.eps(k, i, 0);
    const model::FusedSample fused = model::Model::fuse_and_sample(la, lb, eps);
    const auto prop = batch.proposal.values().subspan(static_cast<std::size_t>(4 * k), 4);
    const conformal::PredictionSet one = m.decode(fused.z, prop);
    CHECK((one.y_hat.row(0) - out.prediction.y_hat.row(k)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((one.q_h.row(0) - out.prediction.q_h.row(k)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fused.posterior.nmi == doctest::Approx(out.info[static_cast<std::size_t>(k)].nmi));

    const model::FusedSample swapped = model::Model::fuse_and_sample(lb, la, eps);
    CHECK((swapped.z - fused.z).norm() < 1e-12);
    const model::FusedSample mean = model::Model::fuse_and_sample(la, lb, Vec4::Zero());
    CHECK(mean.z == mean.posterior.mu_joint);
  }
}

TEST_CASE("KL divergence against scalar calculus") {
  CHECK(model::kl_divergence(Vec4::Zero(), Mat4::Identity()) == 0.0);
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    Vec4 mu;
    Vec4 var;
    for (int i = 0; i < 4; ++i) {
      mu(i) = rng.uniform(-2.0, 2.0);
      var(i) = rng.uniform(0.1, 4.0);
    }
    // sum of independent one-dimensional divergences
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) {
      expected += 0.5 * (var(i) + mu(i) * mu(i) - 1.0 - std::log(var(i)));
    }
    const Mat4 diag = var.asDiagonal();
    CHECK(model::kl_divergence(mu, diag) == doctest::Approx(expected).epsilon(1e-12));
    // rotation invariance
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(
                                  testing::random_spd(rng, 4)).householderQ();
    const Mat4 rot = q;
    CHECK(model::kl_divergence(rot * mu, rot * diag * rot.transpose()) ==
          doctest::Approx(expected).epsilon(1e-10));
    CHECK(model::kl_divergence(mu, diag) >= 0.0);
  }
}

TEST_CASE("graph KL matches numeric KL and differentiates") {
  Rng rng(5);
  Tensor mu(Shape{3, 4, 1});
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = rng.uniform(-1.0, 1.0);
  const Tensor v = testing::random_spd_tensor(rng, 3, 4, 0.3, 2.5);
  diff::Graph g;
  const diff::Var kl = model::kl_divergence(g.constant(mu), g.constant(v));
  CHECK(kl.shape() == Shape{3, 1, 1});
  for (int k = 0; k < 3; ++k) {
    CHECK(kl.value()(k, 0, 0) ==
          doctest::Approx(model::kl_divergence(Vec4(mu.matrix(k)), Mat4(v.matrix(k)))).epsilon(1e-12));
  }
  const auto grads = testing::compare_gradients(
      [](diff::Graph&, std::span<const diff::Var> x) { return diff::sum(model::kl_divergence(x[0], x[1])); },
      {mu, v});
  CHECK(grads.max_rel_error < 1e-6);
}

TEST_CASE("model gradients through the whole forward pass") {
  const model::ModelConfig c = small_config();
  const model::ModelParams params = model::ModelParams::init(c);
  Rng rng(6);
  const model::BatchInput batch = random_batch(rng, c, 3);
  std::vector<Tensor> inputs;
  for (const auto& e : params.entries()) inputs.push_back(e.value);
  const auto report = diff::grad_check(
      [&](diff::Graph& g, std::span<const diff::Var> leaves) {
        const model::BoundParams bound(params, {leaves.begin(), leaves.end()});
        const model::ForwardVars f = model::forward(g, bound, c, batch);
        const diff::Var spread = diff::sum(diff::sub(f.q_h, f.q_l));
        return diff::add(diff::sum(diff::mul(f.y_hat, f.y_hat)), spread);
      },
      inputs, 1e-5, 1e-4);
  CHECK(report.max_error < 1e-4);
}

TEST_CASE("checkpoint round trip and rejection") {
  testing::TempDir dir("ckpt");
  const model::ModelConfig c = small_config();
  const model::Model m(c);
  const auto path = dir / "m.json";
  model::save_checkpoint(path, m);
  const model::Model loaded = model::load_checkpoint(path);
  CHECK(loaded.config() == c);
  Rng rng(7);
  const model::BatchInput batch = random_batch(rng, c, 3);
  CHECK(loaded.predict(batch).prediction.q_h == m.predict(batch).prediction.q_h);

  model::save_checkpoint(dir / "again.json", loaded);
  std::ifstream f1(path), f2(dir / "again.json");
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  auto rewrite = [&](const std::string& name, auto edit) {
    nlohmann::json j = nlohmann::json::parse(s1);
    edit(j);
    std::ofstream(dir / name) << j.dump();
    return dir / name;
  };
  CHECK_THROWS_AS(model::load_checkpoint(rewrite("v.json", [](auto& j) { j["version"] = 99; })),
                  ConfigError);
  CHECK_THROWS_AS(model::load_checkpoint(rewrite("w.json", [](auto& j) {
                    j["weights"].erase("dec.y_hat.bias");
                  })),
                  ConfigError);
  CHECK_THROWS_AS(model::load_checkpoint(rewrite("s.json", [](auto& j) {
                    j["weights"]["dec.y_hat.bias"].push_back(1.0);
                  })),
                  ConfigError);
  std::ofstream(dir / "t.json") << s1.substr(0, s1.size() / 2);
  CHECK_THROWS_AS(model::load_checkpoint(dir / "t.json"), IoError);
  CHECK_THROWS_AS(model::load_checkpoint(dir / "missing.json"), IoError);
}

TEST_CASE("model config validation") {
  model::ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = model::ModelConfig{};
  c.leaky_slope = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
