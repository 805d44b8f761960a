// Copyright 2026 The hsdacs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: train, decode, sweep, export-align, grad-check.

#ifndef HSDACS_TOOLS_RUN_H_
#define HSDACS_TOOLS_RUN_H_

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hsdacs/data.h"
#include "hsdacs/training.h"

namespace hsdacs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Model, training and data settings merged from one key = value namespace.
// Model settings start from the desk-scale configuration.
struct RunConfig {
  ModelConfig model = ModelConfig::desk_scale();
  TrainConfig train;
  DataConfig data;

  // Sets the key in every section that knows it. Throws ConfigError for a
  // key no section recognises.
  void apply(std::string_view key, std::string_view value);
  void apply_all(const KeyValues& kv);
  // Reads a key = value file. Throws ConfigError (IoError if unreadable).
  void load_file(const std::string& path);
  // Applies "key=value".
  void apply_assignment(std::string_view assignment);
  void validate() const;
  // Decode length bound for the configured data.
  std::size_t max_decode_len() const { return 2 * data.max_length + 2; }
};

// Runs one command. args excludes the program name. Human-readable output
// goes to out, diagnostics to err. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hsdacs::cli

#endif  // HSDACS_TOOLS_RUN_H_
