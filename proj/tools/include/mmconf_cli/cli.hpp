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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmconf/model.hpp"
#include "mmconf/synthdata.hpp"
#include "mmconf/trainer.hpp"

namespace mmconf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAbort = 3;

/// Everything a config file can set.
struct Settings {
  data::DataConfig data;
  model::ModelConfig model;
  train::TrainConfig train;

  void validate() const;
};

struct KeyInfo {
  std::string key;
  std::string help;
};

/// Recognised config keys in file order of documentation.
const std::vector<KeyInfo>& config_keys();

/// Current value of a key, formatted the way a config file would spell it.
std::string get_value(const Settings& s, std::string_view key);

/// Throws ConfigError on an unknown key or an unparsable value.
void set_value(Settings& s, std::string_view key, std::string_view value);

/// Applies a "key=value" assignment.
void apply_assignment(Settings& s, std::string_view assignment);

/// Reads key=value lines; '#' starts a comment. Errors carry the line number.
void apply_config_file(Settings& s, const std::filesystem::path& path);

/// Runs the command line; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmconf::cli
