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

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "mmconf/error.hpp"
#include "mmconf/model.hpp"

namespace mmconf::model {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  const ModelConfig& c = model.config();
  json doc;
  doc["version"] = kCheckpointVersion;
  doc["config"] = {{"feat_dim_a", c.feat_dim_a},
                   {"feat_dim_b", c.feat_dim_b},
                   {"hidden", c.hidden},
                   {"latent_dim", ModelConfig::kLatentDim},
                   {"proposal_dim", ModelConfig::kProposalDim},
                   {"out_dim", ModelConfig::kOutDim},
                   {"leaky_slope", c.leaky_slope},
                   {"seed", c.seed}};
  json weights = json::object();
  for (const NamedTensor& e : model.params().entries()) {
    weights[e.name] = std::vector<double>(e.value.values().begin(), e.value.values().end());
  }
  doc["weights"] = std::move(weights);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write checkpoint '{}'", path.string()));
  out << doc.dump() << '\n';
  if (!out) throw IoError(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read checkpoint '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(fmt::format("checkpoint '{}': parse error: {}", path.string(), e.what()));
  }
  try {
    if (!doc.contains("version") || doc["version"].get<int>() != kCheckpointVersion) {
      throw ConfigError(fmt::format("checkpoint '{}': unsupported version {}", path.string(),
                                    doc.contains("version") ? doc["version"].dump() : "<missing>"));
    }
    const json& jc = doc.at("config");
    ModelConfig c;
    c.feat_dim_a = jc.at("feat_dim_a").get<int>();
    c.feat_dim_b = jc.at("feat_dim_b").get<int>();
    c.hidden = jc.at("hidden").get<int>();
    c.leaky_slope = jc.at("leaky_slope").get<double>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    if (jc.at("latent_dim").get<int>() != ModelConfig::kLatentDim ||
        jc.at("proposal_dim").get<int>() != ModelConfig::kProposalDim ||
        jc.at("out_dim").get<int>() != ModelConfig::kOutDim) {
      throw ConfigError("checkpoint latent/proposal/output dimensions do not match 4/4/24");
    }
    c.validate();

    const json& jw = doc.at("weights");
    ModelParams params;
    for (const auto& [name, shape] : ModelParams::layout(c)) {
      if (!jw.contains(name)) {
        throw ConfigError(fmt::format("checkpoint is missing weight '{}'", name));
      }
      auto values = jw.at(name).get<std::vector<double>>();
      if (values.size() != shape.size()) {
        throw ConfigError(fmt::format("weight '{}' has {} values, expected {}", name,
                                      values.size(), shape.size()));
      }
      params.add(name, Tensor(shape, std::move(values)));
    }
    if (jw.size() != params.entries().size()) {
      throw ConfigError("checkpoint contains unexpected weights");
    }
    return Model(c, std::move(params));
  } catch (const json::exception& e) {
    throw IoError(fmt::format("checkpoint '{}': {}", path.string(), e.what()));
  }
}

}  // namespace mmconf::model
