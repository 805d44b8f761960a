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

// Monotonic halting for cross-attention.
//
// A monotonic-attention head scores encoder frame j for output step i with
// e = q . k_j / sqrt(d_k) and turns it into a halting probability
// p = sigmoid(e). Frames are consumed left to right while a running sum of p
// is accumulated; computation halts at the first frame where the sum strictly
// exceeds a threshold, or at the end of the look-ahead window.
//
//  * DACS: every head keeps its own sum and halts on its own (threshold
//    theta, default 1).
//  * HS-DACS: the heads of a layer pool their probabilities per frame
//    (sum over heads, in head order) into one layer-wise sum compared with a
//    joint threshold (default: the head count). All heads halt together.
//
// The raw probabilities of the consumed frames are the attention weights;
// they are never renormalised.

#ifndef HSDACS_HALTING_H_
#define HSDACS_HALTING_H_

#include <cstddef>
#include <span>
#include <vector>

#include "hsdacs/config.h"
#include "hsdacs/tensor.h"

namespace hsdacs {

enum class HaltReason { kThreshold, kWindow };

std::string_view to_string(HaltReason reason);

// Halting probabilities of one decoder layer at one output step.
struct HaltingProbs {
  std::size_t heads = 0;
  std::size_t frames = 0;       // J, the number of scored frames
  std::vector<double> energies;  // heads x frames, row-major
  std::vector<double> probs;     // sigmoid(energies)

  static HaltingProbs from_energies(std::size_t heads, std::size_t frames,
                                    std::vector<double> energies);
  static HaltingProbs from_probs(std::size_t heads, std::size_t frames,
                                 std::vector<double> probs);

  std::span<const double> head(std::size_t h) const {
    return std::span<const double>(probs).subspan(h * frames, frames);
  }
};

struct HaltResult {
  std::size_t halt = 0;  // N: 1-based count of consumed frames
  HaltReason reason = HaltReason::kWindow;
  // Per head, the first `halt` probabilities: the weights applied to the
  // values.
  std::vector<std::vector<double>> truncated_weights;
};

// Running accumulator of halting mass. add() returns true when the sum
// strictly exceeds the threshold after adding `mass`.
class HaltAccumulator {
 public:
  explicit HaltAccumulator(double threshold) : threshold_(threshold) {}

  bool add(double mass) {
    total_ += mass;
    ++consumed_;
    return total_ > threshold_;
  }
  double total() const { return total_; }
  std::size_t consumed() const { return consumed_; }

 private:
  double threshold_;
  double total_ = 0.0;
  std::size_t consumed_ = 0;
};

// Monotonic energies q . k_j / sqrt(d_k) for every row k_j of keys.
std::vector<double> ma_energy(std::span<const double> query, const Tensor& keys);
// Energy of a single frame; the step-wise form of ma_energy.
double ma_energy_at(std::span<const double> query, std::span<const double> key);

// Per-head halting. Only the first window_end entries of p are read.
// Throws ContractError when the window is empty or longer than p.
HaltResult dacs_halt(std::span<const double> p, double threshold,
                     std::size_t window_end);

// Layer-wise halting on head-summed probabilities.
HaltResult hs_dacs_halt(const HaltingProbs& probs, double joint_threshold,
                        std::size_t window_end);

// sum_{j < p.size()} p[j] * v[j]; v has at least p.size() rows.
std::vector<double> truncated_context(std::span<const double> p, const Tensor& v);

// Result of monotonic or softmax cross-attention over a whole target
// sequence (teacher forcing, no look-ahead limit).
struct CrossAttentionOutput {
  std::vector<Tensor> contexts;  // per head, L x d_k
  std::vector<Tensor> weights;   // per head, L x T applied weights
  // halts[h][i]: frames consumed by head h at output step i.
  std::vector<std::vector<std::size_t>> halts;
};

// Vectorised training-time cross-attention. queries/keys/values hold one
// tensor per head (L x d_k and T x d_k). Monotonic modes compute every
// probability in parallel, halt each row with window T, zero the weights
// beyond the halt and contract with the values; gradients flow through the
// retained probabilities. kOffline is plain softmax attention.
CrossAttentionOutput train_attention(std::span<const Tensor> queries,
                                     std::span<const Tensor> keys,
                                     std::span<const Tensor> values,
                                     HaltingMode mode, double threshold);

}  // namespace hsdacs

#endif  // HSDACS_HALTING_H_
