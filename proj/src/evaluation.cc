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

#include "hsdacs/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hsdacs/errors.h"

namespace hsdacs {

EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});

  EditCounts counts;
  counts.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

double error_rate(std::span<const std::vector<int>> refs,
                  std::span<const std::vector<int>> hyps) {
  if (refs.size() != hyps.size()) {
    throw DimensionError("error_rate: " + std::to_string(refs.size()) + " references vs " +
                         std::to_string(hyps.size()) + " hypotheses");
  }
  std::size_t edits = 0, length = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    edits += edit_distance(refs[k], hyps[k]).distance;
    length += refs[k].size();
  }
  if (length == 0) throw ContractError("error_rate: total reference length is zero");
  return 100.0 * static_cast<double>(edits) / static_cast<double>(length);
}

double coverage_ratio(std::span<const std::vector<std::vector<std::size_t>>> steps,
                      std::size_t layers, std::size_t heads, std::size_t frames) {
  if (frames == 0) throw ContractError("coverage_ratio: T is zero");
  if (steps.empty()) throw ContractError("coverage_ratio: no output steps");
  if (layers == 0 || heads == 0) throw ContractError("coverage_ratio: empty model");
  std::size_t total = 0;
  for (const auto& step : steps) {
    if (step.size() != layers) throw DimensionError("coverage_ratio: layer count mismatch");
    for (const auto& layer : step) {
      if (layer.size() != heads) throw DimensionError("coverage_ratio: head count mismatch");
      for (std::size_t s : layer) total += s;
    }
  }
  return static_cast<double>(total) /
         static_cast<double>(layers * heads * steps.size() * frames);
}

double coverage_ratio(const DecodeTrace& trace) {
  std::vector<std::vector<std::vector<std::size_t>>> steps;
  for (const auto& step : trace.steps) {
    auto& layers = steps.emplace_back();
    for (const auto& layer : step.layers) {
      auto& heads = layers.emplace_back();
      for (const auto& head : layer.heads) heads.push_back(head.halt);
    }
  }
  return coverage_ratio(steps, trace.layers, trace.heads, trace.frames);
}

EvalResult evaluate(const Transformer& model, std::span<const SyntheticSample> samples,
                    std::size_t max_len) {
  if (samples.empty()) throw ContractError("evaluate: empty sample set");
  EvalResult result;
  std::vector<std::vector<int>> refs, hyps;
  double ratio_sum = 0.0;
  for (const auto& s : samples) {
    const EncoderStates enc = model.encode(s.features);
    DecodeResult decoded = decode_greedy(model, enc, max_len);
    ratio_sum += coverage_ratio(decoded.trace);
    refs.push_back(s.target);
    hyps.push_back(decoded.tokens);
    result.decodes.push_back(std::move(decoded));
  }
  result.error_rate = error_rate(refs, hyps);
  result.mean_ratio = ratio_sum / static_cast<double>(samples.size());
  return result;
}

std::vector<SweepRow> sweep_thresholds(const Transformer& model,
                                       std::span<const SyntheticSample> samples,
                                       HaltingMode mode,
                                       std::span<const double> thresholds,
                                       std::size_t max_len) {
  std::vector<SweepRow> rows;
  for (double threshold : thresholds) {
    const Transformer m =
        model.with_halting(mode, threshold, model.config().max_lookahead);
    const EvalResult r = evaluate(m, samples, max_len);
    rows.push_back({threshold, r.error_rate, r.mean_ratio});
  }
  return rows;
}

std::string format_sweep(std::span<const SweepRow> rows, HaltingMode mode) {
  char line[128];
  std::string out = mode == HaltingMode::kHsDacs ? "joint-thr" : "thr";
  out += "\terror(%)\tr\n";
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%.2f\t%.2f\t%.3f\n", row.threshold, row.error_rate,
                  row.ratio);
    out += line;
  }
  return out;
}

std::vector<Tensor> alignment_grid(const DecodeTrace& trace, std::size_t layer) {
  if (layer >= trace.layers) {
    throw ContractError("alignment_grid: layer " + std::to_string(layer) +
                        " out of range for " + std::to_string(trace.layers) + " layers");
  }
  const std::size_t rows = trace.steps.size(), cols = trace.frames;
  std::vector<Tensor> grids;
  for (std::size_t h = 0; h < trace.heads; ++h) {
    Tensor grid(Shape{rows, cols});
    auto values = grid.mutable_values();
    for (std::size_t i = 0; i < rows; ++i) {
      const HeadTrace& head = trace.steps[i].layers[layer].heads[h];
      for (std::size_t j = 0; j < head.halt && j < cols; ++j)
        values[i * cols + j] = head.probs[j];
    }
    grids.push_back(std::move(grid));
  }
  return grids;
}

std::string grid_csv(const Tensor& grid) {
  std::string out;
  for (std::size_t j = 0; j < grid.cols(); ++j) {
    if (j) out += ',';
    out += std::to_string(j);
  }
  out += '\n';
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    const auto row = grid.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

std::string grid_pgm(const Tensor& grid) {
  double peak = 0.0;
  for (double v : grid.values()) peak = std::max(peak, v);
  std::string out = "P2\n" + std::to_string(grid.cols()) + " " +
                    std::to_string(grid.rows()) + "\n255\n";
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    const auto row = grid.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const long level = peak > 0.0 ? std::lround(row[j] / peak * 255.0) : 0;
      if (j) out += ' ';
      out += std::to_string(std::clamp(level, 0L, 255L));
    }
    out += '\n';
  }
  return out;
}

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace

std::vector<std::string> export_alignment(const DecodeTrace& trace, std::size_t layer,
                                          const std::string& prefix,
                                          HaltingMode mode) {
  const std::vector<Tensor> grids = alignment_grid(trace, layer);
  if (mode == HaltingMode::kHsDacs) {
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      const auto& heads = trace.steps[i].layers[layer].heads;
      for (const auto& head : heads) {
        if (head.halt != heads.front().halt) {
          throw ContractError("export_alignment: heads of layer " + std::to_string(layer) +
                              " halt at different frames at step " + std::to_string(i));
        }
      }
    }
  }
  std::vector<std::string> paths;
  for (std::size_t h = 0; h < grids.size(); ++h) {
    const std::string base = prefix + "_head" + std::to_string(h);
    write_file(base + ".csv", grid_csv(grids[h]));
    write_file(base + ".pgm", grid_pgm(grids[h]));
    paths.push_back(base + ".csv");
    paths.push_back(base + ".pgm");
  }
  return paths;
}

}  // namespace hsdacs
