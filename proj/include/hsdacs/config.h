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

// Configuration records and the `key = value` text format shared by config
// files and checkpoints.

#ifndef HSDACS_CONFIG_H_
#define HSDACS_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hsdacs {

enum class HaltingMode { kOffline, kDacs, kHsDacs };

std::string_view to_string(HaltingMode mode);
// Accepts "offline", "dacs", "hsdacs". Throws ConfigError otherwise.
HaltingMode parse_halting_mode(std::string_view text);

inline constexpr int kSosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kFirstTokenId = 2;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses `key = value` lines. Blank lines and text after '#' are ignored.
// Throws ConfigError on a line without '='. `origin` names the source in
// error messages.
KeyValues parse_key_values(std::string_view text, std::string_view origin);
std::string format_key_values(const KeyValues& kv);

// Typed field parsers; throw ConfigError naming the key.
double parse_double(std::string_view key, std::string_view value);
std::int64_t parse_int(std::string_view key, std::string_view value);
std::uint64_t parse_uint(std::string_view key, std::string_view value);
std::vector<double> parse_double_list(std::string_view key,
                                      std::string_view value);
std::string format_double(double value);

// Architecture and halting hyperparameters. Field defaults are the large
// recipe (d_model 256, 4 heads, FFN 2048, 6 encoder and 12 decoder layers,
// 64-frame chunks, look-ahead 16); desk_scale() is what the tools train.
struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t heads = 4;
  std::size_t d_ffn = 2048;
  std::size_t encoder_layers = 6;
  std::size_t decoder_layers = 12;
  std::size_t vocab_size = 30;  // includes the reserved <sos>/<eos> ids
  std::size_t d_feat = 16;
  std::size_t max_lookahead = 16;  // M
  HaltingMode halting_mode = HaltingMode::kHsDacs;
  double dacs_threshold = 1.0;
  std::optional<double> joint_threshold;  // unset means `heads`
  std::size_t chunk_central = 64;
  std::size_t chunk_left = 64;
  std::size_t chunk_right = 64;
  std::size_t subsample_factor = 4;
  double dropout = 0.0;
  std::uint64_t seed = 1;

  static ModelConfig desk_scale();

  std::size_t d_k() const { return d_model / heads; }
  double effective_joint_threshold() const {
    return joint_threshold.value_or(static_cast<double>(heads));
  }
  // Threshold the active halting mode compares against.
  double active_threshold() const;

  // Throws ConfigError when an invariant does not hold.
  void validate() const;

  // Returns false when the key is not a ModelConfig field.
  bool apply(std::string_view key, std::string_view value);
  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace hsdacs

#endif  // HSDACS_CONFIG_H_
