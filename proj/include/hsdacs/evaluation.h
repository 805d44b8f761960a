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

#ifndef HSDACS_EVALUATION_H_
#define HSDACS_EVALUATION_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hsdacs/config.h"
#include "hsdacs/data.h"
#include "hsdacs/decoder.h"
#include "hsdacs/tensor.h"
#include "hsdacs/transformer.h"

namespace hsdacs {

struct EditCounts {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  bool operator==(const EditCounts&) const = default;
};

// Unit-cost Levenshtein distance with one optimal operation breakdown.
EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp);

// Total edits over total reference length, in percent. Throws DimensionError
// for lists of different length and ContractError when all references are
// empty.
double error_rate(std::span<const std::vector<int>> refs,
                  std::span<const std::vector<int>> hyps);

// Fraction of the (layer, head, step, frame) grid actually consumed.
// Throws ContractError when T or L is zero.
double coverage_ratio(const DecodeTrace& trace);
// s[i][l][h] are the computation steps; layers and heads sizes must match.
double coverage_ratio(std::span<const std::vector<std::vector<std::size_t>>> steps,
                      std::size_t layers, std::size_t heads, std::size_t frames);

struct EvalResult {
  double error_rate = 0.0;
  double mean_ratio = 0.0;  // per-utterance r averaged over utterances
  std::vector<DecodeResult> decodes;
};

// Greedy-decodes every sample with the model's configured halting mode.
EvalResult evaluate(const Transformer& model, std::span<const SyntheticSample> samples,
                    std::size_t max_len);

struct SweepRow {
  double threshold = 0.0;
  double error_rate = 0.0;
  double ratio = 0.0;
};

// One greedy evaluation per threshold, applied as theta (dacs) or Theta
// (hsdacs) on weights shared with `model`.
std::vector<SweepRow> sweep_thresholds(const Transformer& model,
                                       std::span<const SyntheticSample> samples,
                                       HaltingMode mode,
                                       std::span<const double> thresholds,
                                       std::size_t max_len);

// Tab-separated table: a header naming the threshold column for the mode,
// then one row per threshold with error rate (%) and r.
std::string format_sweep(std::span<const SweepRow> rows, HaltingMode mode);

// Applied weights of one layer, one steps x T matrix per head. Entries past a
// head's halting position are exactly zero.
std::vector<Tensor> alignment_grid(const DecodeTrace& trace, std::size_t layer);

// Writes <prefix>_head<h>.csv and <prefix>_head<h>.pgm for every head of the
// layer and returns the paths written. For an hsdacs trace every head must
// share one halting position per step (ContractError otherwise). Throws
// IoError when a file cannot be written.
std::vector<std::string> export_alignment(const DecodeTrace& trace, std::size_t layer,
                                          const std::string& prefix,
                                          HaltingMode mode);

// Grid text formats, exposed for testing.
std::string grid_csv(const Tensor& grid);
std::string grid_pgm(const Tensor& grid);

}  // namespace hsdacs

#endif  // HSDACS_EVALUATION_H_
