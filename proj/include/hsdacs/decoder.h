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

// Online decoding with monotonic cross-attention.
//
// Each output step scans encoder frames 1 .. min(t_prev + M, T), where t_prev
// is the boundary exposed by the previous step and M the maximum look-ahead.
// The step reports a new boundary: the furthest frame consumed by any head of
// any layer, never less than t_prev. It becomes the base of the next step's
// window.

#ifndef HSDACS_DECODER_H_
#define HSDACS_DECODER_H_

#include <cstddef>
#include <span>
#include <vector>

#include "hsdacs/halting.h"
#include "hsdacs/transformer.h"

namespace hsdacs {

struct HaltingState {
  std::size_t t_prev = 0;                // frames exposed so far
  std::vector<std::size_t> layer_halts;  // last N per decoder layer
  std::size_t step = 0;                  // output steps taken

  bool operator==(const HaltingState&) const = default;
};

struct HeadTrace {
  // Probabilities (softmax weights in offline mode) computed for this head;
  // the first `halt` are the applied weights.
  std::vector<double> probs;
  std::size_t halt = 0;
  HaltReason reason = HaltReason::kWindow;

  bool operator==(const HeadTrace&) const = default;
};

struct LayerTrace {
  std::size_t window = 0;  // min(t_prev + M, T)
  std::size_t halt = 0;    // furthest frame consumed by any head
  std::vector<HeadTrace> heads;

  bool operator==(const LayerTrace&) const = default;
};

struct StepTrace {
  std::size_t boundary_before = 0;  // t_{i-1}
  std::size_t boundary = 0;         // t_i
  int token = -1;                   // token emitted at this step
  std::vector<LayerTrace> layers;

  bool operator==(const StepTrace&) const = default;
};

struct DecodeTrace {
  std::size_t frames = 0;  // T
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<StepTrace> steps;

  // Adaptive computation steps consumed by head h of layer l at step i.
  std::size_t computation_steps(std::size_t i, std::size_t l, std::size_t h) const {
    return steps[i].layers[l].heads[h].halt;
  }

  bool operator==(const DecodeTrace&) const = default;
};

// Self-attention keys and values of the positions decoded so far, per layer.
struct DecoderCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::size_t positions() const { return keys.empty() ? 0 : keys.front().rows(); }
};

struct StepResult {
  std::vector<double> log_probs;  // over the vocabulary
  HaltingState state;             // state after this step
  StepTrace trace;
};

struct Hypothesis {
  std::vector<int> tokens;  // starts with <sos>
  double log_score = 0.0;
  HaltingState halting;
  DecoderCache cache;
  DecodeTrace trace;
};

struct DecodeResult {
  std::vector<int> tokens;  // without <sos>/<eos>
  double log_score = 0.0;
  DecodeTrace trace;
};

// Decoder bound to one utterance. Holds the per-layer, per-head projected
// encoder keys and values.
class StreamingDecoder {
 public:
  StreamingDecoder(const Transformer& model, const EncoderStates& encoder);

  std::size_t frames() const { return frames_; }
  const Transformer& model() const { return model_; }

  // One output step in the configured halting mode. `prefix` is the token
  // history including <sos>; `cache` must hold prefix.size() - 1 positions
  // and gains one more.
  StepResult step(const HaltingState& state, std::span<const int> prefix,
                  DecoderCache& cache) const;
  // Mode-specific steps; each ignores config().halting_mode.
  StepResult step_hsdacs(const HaltingState& state, std::span<const int> prefix,
                         DecoderCache& cache) const;
  StepResult step_dacs(const HaltingState& state, std::span<const int> prefix,
                       DecoderCache& cache) const;
  StepResult step_offline(const HaltingState& state, std::span<const int> prefix,
                          DecoderCache& cache) const;

  // Runs the steps for a fixed token sequence (teacher forcing through the
  // streaming path). Returns one result per input position.
  std::vector<StepResult> force(std::span<const int> input_tokens) const;

  DecodeTrace empty_trace() const;

 private:
  StepResult step_impl(HaltingMode mode, const HaltingState& state,
                       std::span<const int> prefix, DecoderCache& cache) const;

  const Transformer& model_;
  std::size_t frames_;
  // [layer][head] -> T x d_k
  std::vector<std::vector<Tensor>> cross_keys_;
  std::vector<std::vector<Tensor>> cross_values_;
};

// Greedy decoding: argmax token per step (lowest id on ties) until <eos> or
// max_len steps.
DecodeResult decode_greedy(const Transformer& model, const EncoderStates& encoder,
                           std::size_t max_len);

// Beam search. Finished hypotheses are ranked by log_score / steps^
// length_penalty; ties go to the lexicographically smaller token sequence.
// Throws ConfigError for width 0.
DecodeResult decode_beam(const Transformer& model, const EncoderStates& encoder,
                         std::size_t width, std::size_t max_len,
                         double length_penalty = 1.0);

}  // namespace hsdacs

#endif  // HSDACS_DECODER_H_
