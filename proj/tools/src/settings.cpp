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

#include <charconv>
#include <fstream>
#include <functional>
#include <string>

#include <fmt/format.h>

#include "mmconf/error.hpp"
#include "mmconf_cli/cli.hpp"

namespace mmconf::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(fmt::format("invalid value '{}' for key '{}'", text, key));
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("invalid value '{}' for key '{}' (expected true/false)", text, key));
}

struct Entry {
  KeyInfo info;
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, std::string_view, std::string_view)> set;
};

template <typename T, typename Ref>
Entry number(std::string key, std::string help, Ref ref) {
  Entry e;
  e.info = {std::move(key), std::move(help)};
  e.get = [ref](const Settings& s) {
    Settings copy = s;
    return fmt::format("{}", ref(copy));
  };
  e.set = [ref](Settings& s, std::string_view k, std::string_view v) {
    ref(s) = parse_number<T>(k, v);
  };
  return e;
}

template <typename Ref>
Entry flag(std::string key, std::string help, Ref ref) {
  Entry e;
  e.info = {std::move(key), std::move(help)};
  e.get = [ref](const Settings& s) {
    Settings copy = s;
    return std::string(ref(copy) ? "true" : "false");
  };
  e.set = [ref](Settings& s, std::string_view k, std::string_view v) { ref(s) = parse_bool(k, v); };
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    {
      Entry seed;
      seed.info = {"seed", "master seed for data, initialisation and shuffling"};
      seed.get = [](const Settings& s) { return fmt::format("{}", s.data.seed); };
      seed.set = [](Settings& s, std::string_view k, std::string_view v) {
        const auto value = parse_number<std::uint64_t>(k, v);
        s.data.seed = value;
        s.model.seed = value;
        s.train.seed = value;
      };
      t.push_back(std::move(seed));
    }
    t.push_back(number<int>("n_samples", "number of generated scenes",
                            [](Settings& s) -> int& { return s.data.n_samples; }));
    const char* axes = "xyz";
    for (std::size_t a = 0; a < 3; ++a) {
      const std::string ax(1, axes[a]);
      t.push_back(number<double>("center_" + ax + "_min", "lower bound of the box center " + ax,
                                 [a](Settings& s) -> double& { return s.data.center[a].lo; }));
      t.push_back(number<double>("center_" + ax + "_max", "upper bound of the box center " + ax,
                                 [a](Settings& s) -> double& { return s.data.center[a].hi; }));
    }
    for (std::size_t a = 0; a < 3; ++a) {
      const std::string ax(1, axes[a]);
      t.push_back(number<double>("size_" + ax + "_min", "lower bound of the box size " + ax,
                                 [a](Settings& s) -> double& { return s.data.size[a].lo; }));
      t.push_back(number<double>("size_" + ax + "_max", "upper bound of the box size " + ax,
                                 [a](Settings& s) -> double& { return s.data.size[a].hi; }));
    }
    t.push_back(number<double>("noise_level_a", "feature noise of modality a (also proposal jitter)",
                               [](Settings& s) -> double& { return s.data.noise_level_a; }));
    t.push_back(number<double>("noise_level_b", "feature noise of modality b",
                               [](Settings& s) -> double& { return s.data.noise_level_b; }));
    t.push_back(number<double>("dropout_prob_a", "probability modality a is zeroed",
                               [](Settings& s) -> double& { return s.data.dropout_prob_a; }));
    t.push_back(number<double>("dropout_prob_b", "probability modality b is zeroed",
                               [](Settings& s) -> double& { return s.data.dropout_prob_b; }));
    t.push_back(number<int>("hidden", "hidden layer width",
                            [](Settings& s) -> int& { return s.model.hidden; }));
    t.push_back(number<double>("leaky_slope", "LeakyReLU negative slope",
                               [](Settings& s) -> double& { return s.model.leaky_slope; }));
    t.push_back(number<int>("epochs", "training epochs",
                            [](Settings& s) -> int& { return s.train.epochs; }));
    t.push_back(number<int>("batch_size", "minibatch size",
                            [](Settings& s) -> int& { return s.train.batch_size; }));
    t.push_back(number<double>("learning_rate", "Adam step size",
                               [](Settings& s) -> double& { return s.train.learning_rate; }));
    t.push_back(number<double>("beta1", "Adam first-moment decay",
                               [](Settings& s) -> double& { return s.train.beta1; }));
    t.push_back(number<double>("beta2", "Adam second-moment decay",
                               [](Settings& s) -> double& { return s.train.beta2; }));
    t.push_back(number<double>("adam_eps", "Adam denominator epsilon",
                               [](Settings& s) -> double& { return s.train.adam_eps; }));
    {
      Entry cov;
      cov.info = {"coverage", "target marginal coverage p; sets the quantile levels"};
      cov.get = [](const Settings& s) { return fmt::format("{}", s.train.conformal.p); };
      cov.set = [](Settings& s, std::string_view k, std::string_view v) {
        const double p = parse_number<double>(k, v);
        if (!(p > 0.0 && p < 1.0)) {
          throw ConfigError(fmt::format("coverage must lie in (0, 1), got {}", v));
        }
        s.train.conformal = conformal::ConformalConfig::from_coverage(p);
      };
      t.push_back(std::move(cov));
    }
    t.push_back(number<double>("val_fraction", "held-out fraction",
                               [](Settings& s) -> double& { return s.train.val_fraction; }));
    t.push_back(number<int>("reparam_samples", "latent draws per datum per step",
                            [](Settings& s) -> int& { return s.train.reparam_samples; }));
    t.push_back(flag("nmi_grad", "backpropagate through the NMI weight",
                     [](Settings& s) -> bool& { return s.train.nmi_grad; }));
    t.push_back(flag("u_grad", "backpropagate through U in the reconstruction weight",
                     [](Settings& s) -> bool& { return s.train.u_grad; }));
    t.push_back(number<double>("smooth_l1_beta", "SmoothL1 transition point",
                               [](Settings& s) -> double& { return s.train.smooth_l1_beta; }));
    t.push_back(number<double>("divergence_threshold", "loss magnitude that aborts training",
                               [](Settings& s) -> double& { return s.train.divergence_threshold; }));
    return t;
  }();
  return table;
}

const Entry& find(std::string_view key) {
  for (const Entry& e : entries()) {
    if (e.info.key == key) return e;
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

}  // namespace

void Settings::validate() const {
  data.validate();
  model.validate();
  train.validate();
}

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> k;
    for (const Entry& e : entries()) k.push_back(e.info);
    return k;
  }();
  return keys;
}

std::string get_value(const Settings& s, std::string_view key) { return find(key).get(s); }

void set_value(Settings& s, std::string_view key, std::string_view value) {
  find(key).set(s, key, value);
}

void apply_assignment(Settings& s, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(fmt::format("expected key=value, got '{}'", assignment));
  }
  const auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  if (key.empty()) throw ConfigError(fmt::format("missing key in '{}'", assignment));
  set_value(s, key, value);
}

void apply_config_file(Settings& s, const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw ConfigError(fmt::format("config not found: {}", path.string()));
  }
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("config not found: {}", path.string()));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    try {
      apply_assignment(s, view);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
}

}  // namespace mmconf::cli
