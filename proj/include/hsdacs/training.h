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

#ifndef HSDACS_TRAINING_H_
#define HSDACS_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsdacs/config.h"
#include "hsdacs/data.h"
#include "hsdacs/rng.h"
#include "hsdacs/tensor.h"
#include "hsdacs/transformer.h"

namespace hsdacs {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double base_lr = 1.0;
  std::size_t warmup_steps = 400;
  double label_smoothing = 0.1;
  double grad_clip_norm = 5.0;
  std::string checkpoint_path;
  std::uint64_t seed = 1;

  void validate() const;
  bool apply(std::string_view key, std::string_view value);
  KeyValues to_key_values() const;
};

// Cross-entropy of log_softmax(logits) against (1 - eps) on the target and
// eps / (V - 1) on every other class, averaged over rows where mask is true
// (all rows when mask is empty). Throws DataError for a target outside
// [0, V).
Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> targets,
                         double eps, const std::vector<bool>& mask = {});

// base * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), step >= 1.
double noam_lr(std::size_t step, std::size_t warmup, std::size_t d_model,
               double base);

// Teacher-forced loss of one sample: decoder input <sos> + target, predicted
// target + <eos>.
Tensor sample_loss(const Transformer& model, const Tensor& features,
                   std::span<const int> target, double label_smoothing,
                   const ForwardOptions& options = {});

// Mean of the per-sample losses of the unpadded batch items.
Tensor batch_loss(const Transformer& model, const PaddedBatch& batch,
                  double label_smoothing, const ForwardOptions& options = {});

// Adaptive-moment optimiser (beta1 0.9, beta2 0.98, eps 1e-9). Parameters
// and moments are rounded to 32-bit precision after each update, so a
// checkpoint captures the optimiser exactly.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.98;
  static constexpr double kEpsilon = 1e-9;

  explicit Adam(const Transformer& model);

  // Applies one update with learning rate lr using the parameters' current
  // gradients (missing gradients count as zero).
  void step(Transformer& model, double lr);

  std::uint64_t steps() const { return steps_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

 private:
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_gradients(Transformer& model, double max_norm);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Full training state.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  std::uint32_t version = kFormatVersion;
  ModelConfig model_config;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> moments;  // "adam.m.<param>" then "adam.v.<param>"
  Rng::State rng_state{};
  std::uint64_t step = 0;
};

// Binary little-endian layout:
//   "HSDACS01" | u32 version | u32 len + key=value model config
//   | u32 count | tensors | u32 count | moment tensors | 4 x u64 rng | u64 step
// where a tensor is u32 len + name, u32 rank, rank x u32 dims, f32 values.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
// Throws IoError when the file is unreadable or malformed.
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

// Rebuilds a model from the checkpoint's config and parameters.
Transformer model_from_checkpoint(const Checkpoint& checkpoint);

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;  // learning rate of the last step
};

// Mini-batch trainer over an in-memory dataset. The batch order of epoch e is
// a permutation drawn from (seed, e), so training state is fully described
// by the parameters, the optimiser moments, the RNG state and the step
// counter.
class Trainer {
 public:
  Trainer(Transformer& model, std::span<const SyntheticSample> data,
          TrainConfig config);

  std::size_t batches_per_epoch() const;
  std::uint64_t global_step() const { return step_; }

  // Runs one optimisation step on the next batch. Returns the batch loss.
  // Throws DivergenceError when the loss is not finite.
  double train_step();
  // Runs the remaining steps of the current epoch.
  EpochReport train_epoch();
  // Runs epochs until config.epochs are complete.
  std::vector<EpochReport> train(
      const std::function<void(const EpochReport&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  // Restores parameters, moments, RNG and step. The checkpoint must match
  // the model architecture.
  void restore(const Checkpoint& checkpoint);

 private:
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

  Transformer& model_;
  std::span<const SyntheticSample> data_;
  TrainConfig config_;
  Adam optimizer_;
  Rng rng_;
  std::uint64_t step_ = 0;
  double epoch_loss_sum_ = 0.0;
  std::size_t epoch_batches_ = 0;
};

}  // namespace hsdacs

#endif  // HSDACS_TRAINING_H_
