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

#include "hsdacs/config.h"

#include <charconv>
#include <cmath>
#include <sstream>

#include "hsdacs/errors.h"

namespace hsdacs {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string size_string(std::size_t v) { return std::to_string(v); }

}  // namespace

std::string_view to_string(HaltingMode mode) {
  switch (mode) {
    case HaltingMode::kOffline: return "offline";
    case HaltingMode::kDacs: return "dacs";
    case HaltingMode::kHsDacs: return "hsdacs";
  }
  return "unknown";
}

HaltingMode parse_halting_mode(std::string_view text) {
  if (text == "offline") return HaltingMode::kOffline;
  if (text == "dacs") return HaltingMode::kDacs;
  if (text == "hsdacs") return HaltingMode::kHsDacs;
  throw ConfigError("unknown halting mode '" + std::string(text) +
                    "' (expected offline, dacs or hsdacs)");
}

KeyValues parse_key_values(std::string_view text, std::string_view origin) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + std::string(line) +
                        "'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": empty key");
    }
    kv.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(trim(value));
  if (s == "inf" || s == "+inf") return INFINITY;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("invalid number for '" + std::string(key) + "': '" + s +
                      "'");
  }
  return out;
}

std::int64_t parse_int(std::string_view key, std::string_view value) {
  const std::string s(trim(value));
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("invalid integer for '" + std::string(key) + "': '" + s +
                      "'");
  }
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  const std::int64_t v = parse_int(key, value);
  if (v < 0) {
    throw ConfigError("'" + std::string(key) + "' must be non-negative");
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<double> parse_double_list(std::string_view key,
                                      std::string_view value) {
  std::vector<double> out;
  std::string_view rest = value;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    if (!item.empty()) out.push_back(parse_double(key, item));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  if (out.empty()) {
    throw ConfigError("'" + std::string(key) + "' needs at least one number");
  }
  return out;
}

std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------

ModelConfig ModelConfig::desk_scale() {
  ModelConfig c;
  c.d_model = 64;
  c.heads = 4;
  c.d_ffn = 128;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.vocab_size = 30;
  c.d_feat = 16;
  c.max_lookahead = 16;
  c.chunk_central = 4;
  c.chunk_left = 4;
  c.chunk_right = 4;
  c.subsample_factor = 2;
  return c;
}

double ModelConfig::active_threshold() const {
  switch (halting_mode) {
    case HaltingMode::kDacs: return dacs_threshold;
    case HaltingMode::kHsDacs: return effective_joint_threshold();
    case HaltingMode::kOffline: break;
  }
  return INFINITY;
}

void ModelConfig::validate() const {
  if (heads == 0) throw ConfigError("heads must be at least 1");
  if (d_model == 0 || d_model % heads != 0) {
    throw ConfigError("d_model (" + size_string(d_model) +
                      ") must be a positive multiple of heads (" +
                      size_string(heads) + ")");
  }
  if (d_ffn == 0) throw ConfigError("d_ffn must be positive");
  if (decoder_layers == 0) throw ConfigError("decoder_layers must be at least 1");
  if (vocab_size <= static_cast<std::size_t>(kFirstTokenId)) {
    throw ConfigError("vocab_size must exceed the reserved <sos>/<eos> ids");
  }
  if (d_feat == 0) throw ConfigError("d_feat must be positive");
  if (max_lookahead < 1) throw ConfigError("max_lookahead (M) must be >= 1");
  if (!(dacs_threshold > 0.0)) throw ConfigError("dacs_threshold must be > 0");
  if (joint_threshold && !(*joint_threshold > 0.0)) {
    throw ConfigError("joint_threshold must be > 0");
  }
  if (chunk_central < 1) throw ConfigError("chunk_central must be >= 1");
  if (subsample_factor < 1) throw ConfigError("subsample_factor must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

bool ModelConfig::apply(std::string_view key, std::string_view value) {
  auto as_size = [&] { return static_cast<std::size_t>(parse_uint(key, value)); };
  if (key == "d_model") d_model = as_size();
  else if (key == "heads") heads = as_size();
  else if (key == "d_ffn") d_ffn = as_size();
  else if (key == "encoder_layers") encoder_layers = as_size();
  else if (key == "decoder_layers") decoder_layers = as_size();
  else if (key == "vocab_size") vocab_size = as_size();
  else if (key == "d_feat") d_feat = as_size();
  else if (key == "max_lookahead") max_lookahead = as_size();
  else if (key == "halting_mode") halting_mode = parse_halting_mode(trim(value));
  else if (key == "dacs_threshold") dacs_threshold = parse_double(key, value);
  else if (key == "joint_threshold") {
    if (trim(value) == "auto") joint_threshold.reset();
    else joint_threshold = parse_double(key, value);
  }
  else if (key == "chunk_central") chunk_central = as_size();
  else if (key == "chunk_left") chunk_left = as_size();
  else if (key == "chunk_right") chunk_right = as_size();
  else if (key == "subsample_factor") subsample_factor = as_size();
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "seed") seed = parse_uint(key, value);
  else return false;
  return true;
}

KeyValues ModelConfig::to_key_values() const {
  return {
      {"d_model", size_string(d_model)},
      {"heads", size_string(heads)},
      {"d_ffn", size_string(d_ffn)},
      {"encoder_layers", size_string(encoder_layers)},
      {"decoder_layers", size_string(decoder_layers)},
      {"vocab_size", size_string(vocab_size)},
      {"d_feat", size_string(d_feat)},
      {"max_lookahead", size_string(max_lookahead)},
      {"halting_mode", std::string(to_string(halting_mode))},
      {"dacs_threshold", format_double(dacs_threshold)},
      {"joint_threshold",
       joint_threshold ? format_double(*joint_threshold) : std::string("auto")},
      {"chunk_central", size_string(chunk_central)},
      {"chunk_left", size_string(chunk_left)},
      {"chunk_right", size_string(chunk_right)},
      {"subsample_factor", size_string(subsample_factor)},
      {"dropout", format_double(dropout)},
      {"seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (!c.apply(k, v)) throw ConfigError("unknown model config key '" + k + "'");
  }
  c.validate();
  return c;
}

}  // namespace hsdacs
