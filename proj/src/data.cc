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

#include "hsdacs/data.h"

#include <algorithm>
#include <random>

#include "hsdacs/errors.h"
#include "hsdacs/rng.h"

namespace hsdacs {

void DataConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(kFirstTokenId)) {
    throw ConfigError("data vocab_size must exceed the reserved ids");
  }
  if (min_length < 2 || min_length > max_length) {
    throw ConfigError("need 2 <= min_length <= max_length");
  }
  if (min_duration < 1 || min_duration > max_duration) {
    throw ConfigError("need 1 <= min_duration <= max_duration");
  }
  if (d_feat == 0) throw ConfigError("d_feat must be positive");
  if (noise < 0.0) throw ConfigError("noise must be >= 0");
}

bool DataConfig::apply(std::string_view key, std::string_view value) {
  auto as_size = [&] { return static_cast<std::size_t>(parse_uint(key, value)); };
  if (key == "vocab_size") vocab_size = as_size();
  else if (key == "min_length") min_length = as_size();
  else if (key == "max_length") max_length = as_size();
  else if (key == "min_duration") min_duration = as_size();
  else if (key == "max_duration") max_duration = as_size();
  else if (key == "d_feat") d_feat = as_size();
  else if (key == "noise") noise = parse_double(key, value);
  else if (key == "codebook_seed") codebook_seed = parse_uint(key, value);
  else if (key == "sample_seed") sample_seed = parse_uint(key, value);
  else if (key == "train_samples") train_samples = as_size();
  else if (key == "eval_samples") eval_samples = as_size();
  else return false;
  return true;
}

KeyValues DataConfig::to_key_values() const {
  return {
      {"vocab_size", std::to_string(vocab_size)},
      {"min_length", std::to_string(min_length)},
      {"max_length", std::to_string(max_length)},
      {"min_duration", std::to_string(min_duration)},
      {"max_duration", std::to_string(max_duration)},
      {"d_feat", std::to_string(d_feat)},
      {"noise", format_double(noise)},
      {"codebook_seed", std::to_string(codebook_seed)},
      {"sample_seed", std::to_string(sample_seed)},
      {"train_samples", std::to_string(train_samples)},
      {"eval_samples", std::to_string(eval_samples)},
  };
}

Tensor make_codebook(const DataConfig& config) {
  Rng rng(config.codebook_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor codebook(Shape{config.vocab_size, config.d_feat});
  for (double& v : codebook.mutable_values()) v = normal(rng);
  return codebook;
}

namespace {

SyntheticSample render(const DataConfig& config, const Tensor& codebook,
                       std::size_t index) {
  Rng rng(config.sample_seed, index);
  std::uniform_int_distribution<std::size_t> length_dist(config.min_length,
                                                         config.max_length);
  std::uniform_int_distribution<int> token_dist(
      kFirstTokenId, static_cast<int>(config.vocab_size) - 1);
  std::uniform_int_distribution<std::size_t> duration_dist(config.min_duration,
                                                           config.max_duration);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticSample s;
  const std::size_t length = length_dist(rng);
  std::size_t frames = 0;
  for (std::size_t i = 0; i < length; ++i) {
    s.target.push_back(token_dist(rng));
    const std::size_t d = duration_dist(rng);
    s.alignment.push_back({frames, d});
    frames += d;
  }
  const std::size_t dim = config.d_feat;
  std::vector<double> values;
  values.reserve(frames * dim);
  for (std::size_t i = 0; i < length; ++i) {
    const auto row = codebook.row(static_cast<std::size_t>(s.target[i]));
    for (std::size_t f = 0; f < s.alignment[i].duration; ++f)
      for (std::size_t k = 0; k < dim; ++k)
        values.push_back(row[k] + (config.noise > 0.0 ? config.noise * noise(rng) : 0.0));
  }
  s.features = Tensor(Shape{frames, dim}, std::move(values));
  return s;
}

}  // namespace

SyntheticSample generate_sample(const DataConfig& config, std::size_t index) {
  config.validate();
  return render(config, make_codebook(config), index);
}

std::vector<SyntheticSample> training_set(const DataConfig& config) {
  config.validate();
  const Tensor codebook = make_codebook(config);
  std::vector<SyntheticSample> out;
  out.reserve(config.train_samples);
  for (std::size_t i = 0; i < config.train_samples; ++i)
    out.push_back(render(config, codebook, i));
  return out;
}

std::vector<SyntheticSample> evaluation_set(const DataConfig& config) {
  config.validate();
  const Tensor codebook = make_codebook(config);
  std::vector<SyntheticSample> out;
  out.reserve(config.eval_samples);
  for (std::size_t i = 0; i < config.eval_samples; ++i)
    out.push_back(render(config, codebook, config.train_samples + i));
  return out;
}

Tensor PaddedBatch::item_features(std::size_t b) const {
  const std::size_t f_max = features.shape()[1];
  const std::size_t dim = features.shape()[2];
  const auto all = features.values();
  const auto begin = all.begin() + b * f_max * dim;
  return Tensor(Shape{feature_lengths[b], dim},
                std::vector<double>(begin, begin + feature_lengths[b] * dim));
}

std::vector<int> PaddedBatch::item_target(std::size_t b) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < targets[b].size(); ++i)
    if (target_mask[b][i]) out.push_back(targets[b][i]);
  return out;
}

PaddedBatch pad_batch(std::span<const SyntheticSample> samples) {
  if (samples.empty()) throw ContractError("pad_batch: empty batch");
  const std::size_t dim = samples.front().features.cols();
  std::size_t f_max = 0, l_max = 0;
  for (const auto& s : samples) {
    if (s.features.cols() != dim) {
      throw DimensionError("pad_batch: feature dimensions differ within the batch");
    }
    f_max = std::max(f_max, s.features.rows());
    l_max = std::max(l_max, s.target.size());
  }
  PaddedBatch batch;
  std::vector<double> values(samples.size() * f_max * dim, 0.0);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    std::copy(s.features.values().begin(), s.features.values().end(),
              values.begin() + b * f_max * dim);
    batch.feature_lengths.push_back(s.features.rows());
    std::vector<int> target = s.target;
    std::vector<bool> mask(target.size(), true);
    target.resize(l_max, kEosId);
    mask.resize(l_max, false);
    batch.targets.push_back(std::move(target));
    batch.target_mask.push_back(std::move(mask));
  }
  batch.features = Tensor(Shape{samples.size(), f_max, dim}, std::move(values));
  return batch;
}

}  // namespace hsdacs
