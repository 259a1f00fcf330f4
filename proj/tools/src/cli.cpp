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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmconf/error.hpp"
#include "mmconf_cli/cli.hpp"

namespace mmconf::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kPrecedence =
    "Precedence: built-in defaults < --config file < --set key=value < dedicated flags.\n"
    "Exit codes: 0 success, 2 usage or validation error, 3 runtime abort.";

std::string keys_footer() {
  const Settings defaults;
  std::string text = "Config keys (key = default):\n";
  for (const KeyInfo& k : config_keys()) {
    text += fmt::format("  {:<22} = {:<8} {}\n", k.key, get_value(defaults, k.key), k.help);
  }
  return text + kPrecedence;
}

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key=value config file");
  cmd->add_option("--set", o.sets, "override one config key, e.g. --set hidden=32 (repeatable)")
      ->type_name("KEY=VALUE")
      ->default_str("none");
}

Settings resolve(const CommonOptions& o) {
  Settings s;
  if (!o.config.empty()) apply_config_file(s, o.config);
  for (const std::string& a : o.sets) apply_assignment(s, a);
  return s;
}

template <typename T>
void override_flag(Settings& s, const CLI::Option* opt, std::string_view key, const T& value) {
  if (opt->count() > 0) set_value(s, key, fmt::format("{}", value));
}

Json corners_json(std::span<const double> c) { return Json(std::vector<double>(c.begin(), c.end())); }

Json box_json(const data::Box& b) {
  return Json{{"center", std::vector<double>(b.center.begin(), b.center.end())},
              {"size", std::vector<double>(b.size.begin(), b.size.end())}};
}

Json report_json(const train::EvalReport& r) {
  Json j;
  j["num_objects"] = r.num_objects;
  j["entry_coverage"] = r.entry_coverage;
  j["joint_coverage"] = r.joint_coverage;
  j["mean_width"] = r.mean_width;
  j["mau"] = r.mau;
  j["mean_nmi"] = r.mean_nmi;
  j["iou_threshold"] = train::kIouThreshold;
  j["precision_point"] = r.precision_point;
  j["precision_uncertainty"] = r.precision_uncertainty;
  j["precision_uncertainty_box_only"] = r.precision_uncertainty_box_only;
  j["uncertainty_ge_point"] = r.precision_uncertainty >= r.precision_point;
  Json objects = Json::array();
  for (std::size_t i = 0; i < r.objects.size(); ++i) {
    const train::ObjectGeometry& o = r.objects[i];
    objects.push_back(Json{{"index", i},
                           {"truth", corners_json(o.truth)},
                           {"predicted", corners_json(o.predicted)},
                           {"lower", corners_json(o.lower)},
                           {"upper", corners_json(o.upper)},
                           {"combined", box_json(o.combined)},
                           {"iou_point", o.iou_point},
                           {"iou_combined", o.iou_combined},
                           {"mean_width", o.mean_width}});
  }
  j["objects"] = std::move(objects);
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  f << text;
  if (!f) throw IoError(fmt::format("failed writing {}", path.string()));
}

// --- subcommands -----------------------------------------------------------------

struct GenArgs {
  CommonOptions common;
  std::string out;
  std::uint64_t seed = data::DataConfig{}.seed;
  int n = data::DataConfig{}.n_samples;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* n_opt = nullptr;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  Settings s = resolve(a.common);
  override_flag(s, a.seed_opt, "seed", a.seed);
  override_flag(s, a.n_opt, "n_samples", a.n);
  s.data.validate();
  const auto samples = data::generate_dataset(s.data);
  data::write_samples(a.out, samples);
  out << fmt::format("wrote {} samples (seed {}) to {}\n", samples.size(), s.data.seed, a.out);
  return kExitOk;
}

struct TrainArgs {
  CommonOptions common;
  std::string data;
  int epochs = train::TrainConfig{}.epochs;
  double coverage = train::TrainConfig{}.conformal.p;
  std::uint64_t seed = train::TrainConfig{}.seed;
  std::string out_model = "model.json";
  std::string out_metrics = "metrics.csv";
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* coverage_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  Settings s = resolve(a.common);
  override_flag(s, a.epochs_opt, "epochs", a.epochs);
  override_flag(s, a.coverage_opt, "coverage", a.coverage);
  override_flag(s, a.seed_opt, "seed", a.seed);
  const auto samples = data::read_samples(a.data);
  if (!samples.empty()) {
    s.model.feat_dim_a = static_cast<int>(samples.front().feat_a.size());
    s.model.feat_dim_b = static_cast<int>(samples.front().feat_b.size());
  }
  s.model.validate();
  s.train.validate();

  std::vector<train::EpochMetrics> seen;
  const auto on_epoch = [&](const train::EpochMetrics& m) {
    seen.push_back(m);
    out << fmt::format(
        "epoch {:>3}/{} loss {:.4f} U {:.4f} NMI {:.4f} train_cov {:.4f} val_cov {:.4f} "
        "val_MAU {:.4f}\n",
        m.epoch, s.train.epochs, m.total_loss, m.mean_u, m.mean_nmi, m.train_coverage,
        m.val_coverage, m.val_mau);
  };
  try {
    const train::TrainResult result = train::train(samples, s.model, s.train, on_epoch);
    model::save_checkpoint(a.out_model, result.model);
    train::write_metrics_csv(a.out_metrics, result.metrics);
  } catch (const train::TrainingDiverged& e) {
    model::save_checkpoint(a.out_model, e.last_good());
    train::write_metrics_csv(a.out_metrics, seen);
    err << "error: " << e.what() << '\n';
    err << fmt::format("last good checkpoint (after epoch {}) written to {}\n", e.epoch() - 1,
                       a.out_model);
    return kExitAbort;
  }
  out << fmt::format("wrote checkpoint {} and metrics {}\n", a.out_model, a.out_metrics);
  return kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string report;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const model::Model m = model::load_checkpoint(a.model);
  const auto samples = data::read_samples(a.data);
  if (samples.empty()) throw Error(fmt::format("{}: no samples to evaluate", a.data));
  for (const auto& smp : samples) {
    if (static_cast<int>(smp.feat_a.size()) != m.config().feat_dim_a ||
        static_cast<int>(smp.feat_b.size()) != m.config().feat_dim_b) {
      throw ShapeError(fmt::format("data features {}/{} do not match checkpoint {}/{}",
                                   smp.feat_a.size(), smp.feat_b.size(), m.config().feat_dim_a,
                                   m.config().feat_dim_b));
    }
  }
  const train::EvalReport r = train::evaluate(m, samples);
  write_text(a.report, report_json(r).dump(2) + "\n");
  out << fmt::format(
      "objects {} entry_coverage {:.4f} joint_coverage {:.4f} MAU {:.4f} "
      "precision point {:.4f} uncertainty {:.4f}\n",
      r.num_objects, r.entry_coverage, r.joint_coverage, r.mau, r.precision_point,
      r.precision_uncertainty);
  out << fmt::format("wrote report {}\n", a.report);
  return kExitOk;
}

struct ReportArgs {
  std::string metrics;
  std::string out_dir = ".";
};

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  const auto rows = train::read_metrics_csv(a.metrics);
  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  std::string unc = "epoch,mean_U,mean_NMI\n";
  std::string cov = "epoch,train_coverage,val_coverage\n";
  std::vector<double> u;
  std::vector<double> nmi;
  for (const auto& m : rows) {
    unc += fmt::format("{},{},{}\n", m.epoch, m.mean_u, m.mean_nmi);
    cov += fmt::format("{},{},{}\n", m.epoch, m.train_coverage, m.val_coverage);
    u.push_back(m.mean_u);
    nmi.push_back(m.mean_nmi);
  }
  write_text(dir / "uncertainty_vs_nmi.csv", unc);
  write_text(dir / "coverage.csv", cov);
  const double r = train::pearson(u, nmi);
  if (std::isnan(r)) {
    err << "warning: correlation undefined (fewer than two rows or a constant column)\n";
    out << "pearson_r(mean_U, mean_NMI) = undefined\n";
  } else {
    out << fmt::format("pearson_r(mean_U, mean_NMI) = {:.6f}\n", r);
  }
  out << fmt::format("wrote {} rows to {}\n", rows.size(), dir.string());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal box regression with NMI-weighted conformal intervals."};
  app.name("mmconf");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.footer(kPrecedence);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset as JSON lines");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--out", gen.out, "output dataset path")->required();
  gen.seed_opt = gen_cmd->add_option("--seed", gen.seed, "master seed");
  gen.n_opt = gen_cmd->add_option("--n", gen.n, "number of samples")->check(CLI::NonNegativeNumber);
  gen_cmd->footer(keys_footer());

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write checkpoint and metrics");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--data", tr.data, "dataset path")->required();
  tr.epochs_opt = train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  tr.coverage_opt = train_cmd->add_option(
      "--coverage", tr.coverage, "target coverage p; quantile levels (1-p)/2 and 1-(1-p)/2");
  tr.seed_opt = train_cmd->add_option("--seed", tr.seed, "master seed");
  train_cmd->add_option("--out-model", tr.out_model, "checkpoint path");
  train_cmd->add_option("--out-metrics", tr.out_metrics, "per-epoch metrics CSV path");
  train_cmd->footer(keys_footer());

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and write a JSON report");
  eval_cmd->add_option("--model", ev.model, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "dataset path")->required();
  eval_cmd->add_option("--report", ev.report, "report path")->required();
  eval_cmd->footer(kPrecedence);

  ReportArgs rep;
  CLI::App* report_cmd =
      app.add_subcommand("report", "turn a metrics CSV into plot-ready CSVs");
  report_cmd->add_option("--metrics", rep.metrics, "metrics CSV from train")->required();
  report_cmd->add_option("--out-dir", rep.out_dir, "output directory");
  report_cmd->footer(kPrecedence);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*train_cmd) return cmd_train(tr, out, err);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*report_cmd) return cmd_report(rep, out, err);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitAbort;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitAbort;
  }
  return kExitUsage;
}

}  // namespace mmconf::cli
