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

#include "hsdacs/halting.h"

#include <cmath>
#include <string>

#include "hsdacs/errors.h"

namespace hsdacs {

namespace {

void check_window(std::size_t window_end, std::size_t available,
                  const char* op) {
  if (window_end == 0) {
    throw ContractError(std::string(op) + ": empty look-ahead window");
  }
  if (window_end > available) {
    throw ContractError(std::string(op) + ": window of " +
                        std::to_string(window_end) + " frames exceeds the " +
                        std::to_string(available) + " scored frames");
  }
}

}  // namespace

std::string_view to_string(HaltReason reason) {
  return reason == HaltReason::kThreshold ? "threshold" : "window";
}

HaltingProbs HaltingProbs::from_energies(std::size_t heads, std::size_t frames,
                                         std::vector<double> energies) {
  if (energies.size() != heads * frames) {
    throw DimensionError("HaltingProbs: expected " +
                         std::to_string(heads * frames) + " energies, got " +
                         std::to_string(energies.size()));
  }
  HaltingProbs out;
  out.heads = heads;
  out.frames = frames;
  out.probs.resize(energies.size());
  for (std::size_t i = 0; i < energies.size(); ++i)
    out.probs[i] = sigmoid_scalar(energies[i]);
  out.energies = std::move(energies);
  return out;
}

HaltingProbs HaltingProbs::from_probs(std::size_t heads, std::size_t frames,
                                      std::vector<double> probs) {
  if (probs.size() != heads * frames) {
    throw DimensionError("HaltingProbs: expected " +
                         std::to_string(heads * frames) +
                         " probabilities, got " + std::to_string(probs.size()));
  }
  HaltingProbs out;
  out.heads = heads;
  out.frames = frames;
  out.energies.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.energies[i] = std::log(probs[i]) - std::log1p(-probs[i]);
  out.probs = std::move(probs);
  return out;
}

double ma_energy_at(std::span<const double> query, std::span<const double> key) {
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(query.size()));
  return dot(query, key) * inv_sqrt_dk;
}

std::vector<double> ma_energy(std::span<const double> query, const Tensor& keys) {
  if (keys.rank() != 2 || keys.cols() != query.size()) {
    throw DimensionError("ma_energy: query of size " +
                         std::to_string(query.size()) +
                         " against keys " + shape_string(keys.shape()));
  }
  std::vector<double> e(keys.rows());
  for (std::size_t j = 0; j < keys.rows(); ++j) e[j] = ma_energy_at(query, keys.row(j));
  return e;
}

HaltResult dacs_halt(std::span<const double> p, double threshold,
                     std::size_t window_end) {
  check_window(window_end, p.size(), "dacs_halt");
  HaltResult result;
  HaltAccumulator acc(threshold);
  result.halt = window_end;
  for (std::size_t j = 0; j < window_end; ++j) {
    if (acc.add(p[j])) {
      result.halt = j + 1;
      result.reason = HaltReason::kThreshold;
      break;
    }
  }
  result.truncated_weights.emplace_back(p.begin(), p.begin() + result.halt);
  return result;
}

HaltResult hs_dacs_halt(const HaltingProbs& probs, double joint_threshold,
                        std::size_t window_end) {
  if (probs.heads == 0) throw ContractError("hs_dacs_halt: no heads");
  check_window(window_end, probs.frames, "hs_dacs_halt");
  HaltResult result;
  HaltAccumulator acc(joint_threshold);
  result.halt = window_end;
  for (std::size_t j = 0; j < window_end; ++j) {
    double layer_mass = 0.0;
    for (std::size_t h = 0; h < probs.heads; ++h) layer_mass += probs.head(h)[j];
    if (acc.add(layer_mass)) {
      result.halt = j + 1;
      result.reason = HaltReason::kThreshold;
      break;
    }
  }
  for (std::size_t h = 0; h < probs.heads; ++h) {
    const auto row = probs.head(h);
    result.truncated_weights.emplace_back(row.begin(), row.begin() + result.halt);
  }
  return result;
}

std::vector<double> truncated_context(std::span<const double> p, const Tensor& v) {
  if (v.rank() != 2 || v.rows() < p.size()) {
    throw DimensionError("truncated_context: " + std::to_string(p.size()) +
                         " weights against values " + shape_string(v.shape()));
  }
  const std::size_t d = v.cols();
  std::vector<double> c(d, 0.0);
  for (std::size_t m = 0; m < p.size(); ++m) {
    const auto row = v.row(m);
    for (std::size_t k = 0; k < d; ++k) c[k] += p[m] * row[k];
  }
  return c;
}

CrossAttentionOutput train_attention(std::span<const Tensor> queries,
                                     std::span<const Tensor> keys,
                                     std::span<const Tensor> values,
                                     HaltingMode mode, double threshold) {
  const std::size_t heads = queries.size();
  if (heads == 0 || keys.size() != heads || values.size() != heads) {
    throw DimensionError("train_attention: need one query, key and value per head");
  }
  const std::size_t steps = queries[0].rows();
  const std::size_t frames = keys[0].rows();
  if (frames == 0) throw ContractError("train_attention: no encoder frames");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(queries[0].cols()));

  CrossAttentionOutput out;
  out.halts.assign(heads, std::vector<std::size_t>(steps, frames));
  std::vector<Tensor> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor energies = scale(matmul_transposed(queries[h], keys[h]), inv_sqrt_dk);
    if (mode == HaltingMode::kOffline) {
      out.weights.push_back(softmax_rows(energies));
    } else {
      probs.push_back(sigmoid(energies));
    }
  }

  if (mode != HaltingMode::kOffline) {
    if (mode == HaltingMode::kDacs) {
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < steps; ++i)
          out.halts[h][i] = dacs_halt(probs[h].row(i), threshold, frames).halt;
    } else {
      for (std::size_t i = 0; i < steps; ++i) {
        std::vector<double> rows;
        rows.reserve(heads * frames);
        for (std::size_t h = 0; h < heads; ++h) {
          const auto r = probs[h].row(i);
          rows.insert(rows.end(), r.begin(), r.end());
        }
        const auto probs_i = HaltingProbs::from_probs(heads, frames, std::move(rows));
        const std::size_t n = hs_dacs_halt(probs_i, threshold, frames).halt;
        for (std::size_t h = 0; h < heads; ++h) out.halts[h][i] = n;
      }
    }
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor keep(Shape{steps, frames});
      auto k = keep.mutable_values();
      for (std::size_t i = 0; i < steps; ++i)
        for (std::size_t j = 0; j < out.halts[h][i]; ++j) k[i * frames + j] = 1.0;
      out.weights.push_back(mul(probs[h], keep));
    }
  }

  for (std::size_t h = 0; h < heads; ++h)
    out.contexts.push_back(matmul(out.weights[h], values[h]));
  return out;
}

}  // namespace hsdacs
