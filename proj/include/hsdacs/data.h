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

// Synthetic monotonic transduction task: each target token is rendered as a
// run of noisy copies of a per-token codebook vector, so the ground-truth
// alignment between output tokens and feature frames is known and monotonic.

#ifndef HSDACS_DATA_H_
#define HSDACS_DATA_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hsdacs/config.h"
#include "hsdacs/tensor.h"

namespace hsdacs {

struct DataConfig {
  std::size_t vocab_size = 30;  // includes <sos>/<eos>; tokens are 2..V-1
  std::size_t min_length = 5;
  std::size_t max_length = 20;
  std::size_t min_duration = 2;
  std::size_t max_duration = 5;
  std::size_t d_feat = 16;
  double noise = 0.3;
  std::uint64_t codebook_seed = 7;
  std::uint64_t sample_seed = 11;
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 200;

  void validate() const;
  bool apply(std::string_view key, std::string_view value);
  KeyValues to_key_values() const;
};

struct TokenSpan {
  std::size_t start = 0;
  std::size_t duration = 0;
};

struct SyntheticSample {
  std::vector<int> target;
  Tensor features;  // F x d_feat
  std::vector<TokenSpan> alignment;
};

// V x d_feat matrix of unit-normal rows drawn from codebook_seed. Rows 0 and
// 1 (reserved ids) exist but are never rendered.
Tensor make_codebook(const DataConfig& config);

// Sample `index`, fully determined by (codebook_seed, sample_seed, index).
SyntheticSample generate_sample(const DataConfig& config, std::size_t index);

// Training samples use indices [0, train_samples); evaluation samples the
// next eval_samples indices.
std::vector<SyntheticSample> training_set(const DataConfig& config);
std::vector<SyntheticSample> evaluation_set(const DataConfig& config);

struct PaddedBatch {
  Tensor features;  // B x F_max x d_feat, zero padded
  std::vector<std::size_t> feature_lengths;
  std::vector<std::vector<int>> targets;  // padded with <eos> to L_max
  std::vector<std::vector<bool>> target_mask;  // true at real positions
  std::size_t batch_size() const { return feature_lengths.size(); }

  // Unpadded features of item b.
  Tensor item_features(std::size_t b) const;
  // Unpadded target of item b.
  std::vector<int> item_target(std::size_t b) const;
};

// Throws ContractError for an empty batch.
PaddedBatch pad_batch(std::span<const SyntheticSample> samples);

}  // namespace hsdacs

#endif  // HSDACS_DATA_H_
