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

#include "hsdacs/decoder.h"

#include <algorithm>
#include <cmath>

#include "hsdacs/errors.h"

namespace hsdacs {

namespace {

Tensor append_row(const Tensor& cache, const Tensor& row) {
  if (cache.numel() == 0) return row;
  const Tensor parts[] = {cache, row};
  return concat_rows(parts);
}

Tensor row_tensor(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{1, n}, std::move(values));
}

std::vector<int> strip_markers(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (tokens[i] == kEosId && i + 1 == tokens.size()) break;
    out.push_back(tokens[i]);
  }
  return out;
}

}  // namespace

StreamingDecoder::StreamingDecoder(const Transformer& model,
                                   const EncoderStates& encoder)
    : model_(model), frames_(encoder.frames()) {
  if (frames_ == 0) throw ContractError("StreamingDecoder: no encoder frames");
  const std::size_t heads = model.config().heads;
  const std::size_t dk = model.config().d_k();
  for (const auto& layer : model.decoder_layers()) {
    const Tensor k = layer.cross_attention.key(encoder.states);
    const Tensor v = layer.cross_attention.value(encoder.states);
    std::vector<Tensor> ks, vs;
    for (std::size_t h = 0; h < heads; ++h) {
      ks.push_back(slice_cols(k, h * dk, (h + 1) * dk));
      vs.push_back(slice_cols(v, h * dk, (h + 1) * dk));
    }
    cross_keys_.push_back(std::move(ks));
    cross_values_.push_back(std::move(vs));
  }
}

DecodeTrace StreamingDecoder::empty_trace() const {
  DecodeTrace trace;
  trace.frames = frames_;
  trace.layers = model_.config().decoder_layers;
  trace.heads = model_.config().heads;
  return trace;
}

StepResult StreamingDecoder::step(const HaltingState& state,
                                  std::span<const int> prefix,
                                  DecoderCache& cache) const {
  return step_impl(model_.config().halting_mode, state, prefix, cache);
}

StepResult StreamingDecoder::step_hsdacs(const HaltingState& state,
                                         std::span<const int> prefix,
                                         DecoderCache& cache) const {
  return step_impl(HaltingMode::kHsDacs, state, prefix, cache);
}

StepResult StreamingDecoder::step_dacs(const HaltingState& state,
                                       std::span<const int> prefix,
                                       DecoderCache& cache) const {
  return step_impl(HaltingMode::kDacs, state, prefix, cache);
}

StepResult StreamingDecoder::step_offline(const HaltingState& state,
                                          std::span<const int> prefix,
                                          DecoderCache& cache) const {
  return step_impl(HaltingMode::kOffline, state, prefix, cache);
}

StepResult StreamingDecoder::step_impl(HaltingMode mode, const HaltingState& state,
                                       std::span<const int> prefix,
                                       DecoderCache& cache) const {
  if (prefix.empty()) {
    throw ContractError("decode step: empty prefix (<sos> must be present)");
  }
  if (cache.positions() + 1 != prefix.size()) {
    throw ContractError("decode step: cache holds " +
                        std::to_string(cache.positions()) +
                        " positions for a prefix of " + std::to_string(prefix.size()));
  }
  if (state.t_prev > frames_) {
    throw ContractError("decode step: boundary " + std::to_string(state.t_prev) +
                        " beyond " + std::to_string(frames_) + " frames");
  }
  const ModelConfig& cfg = model_.config();
  const std::size_t layers = cfg.decoder_layers;
  const std::size_t heads = cfg.heads;
  const std::size_t dk = cfg.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t window = mode == HaltingMode::kOffline
                                 ? frames_
                                 : std::min(state.t_prev + cfg.max_lookahead, frames_);
  if (cache.keys.empty()) {
    cache.keys.assign(layers, Tensor(Shape{0, cfg.d_model}));
    cache.values.assign(layers, Tensor(Shape{0, cfg.d_model}));
  }

  StepResult result;
  result.state = state;
  result.state.layer_halts.assign(layers, 0);
  result.trace.boundary_before = state.t_prev;
  std::size_t boundary = state.t_prev;

  Tensor x = model_.embed_tokens(prefix.last(1), prefix.size() - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    const DecoderLayerParams& layer = model_.decoder_layers()[l];

    // Causal self-attention over the cached prefix.
    const Tensor h = layer.norm_self(x);
    const Tensor q = layer.self_attention.query(h);
    cache.keys[l] = append_row(cache.keys[l], layer.self_attention.key(h));
    cache.values[l] = append_row(cache.values[l], layer.self_attention.value(h));
    std::vector<Tensor> self_heads;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const Tensor qh = slice_cols(q, hd * dk, (hd + 1) * dk);
      const Tensor kh = slice_cols(cache.keys[l], hd * dk, (hd + 1) * dk);
      const Tensor vh = slice_cols(cache.values[l], hd * dk, (hd + 1) * dk);
      const Tensor w = softmax_rows(scale(matmul_transposed(qh, kh), inv_sqrt_dk));
      self_heads.push_back(matmul(w, vh));
    }
    x = add(x, layer.self_attention.output(concat_cols(self_heads)));

    // Cross-attention over the look-ahead window.
    const Tensor qc = layer.cross_attention.query(layer.norm_cross(x));
    LayerTrace lt;
    lt.window = window;
    lt.heads.resize(heads);
    std::vector<Tensor> contexts(heads);
    std::vector<Tensor> queries;
    for (std::size_t hd = 0; hd < heads; ++hd)
      queries.push_back(slice_cols(qc, hd * dk, (hd + 1) * dk));

    switch (mode) {
      case HaltingMode::kOffline:
        for (std::size_t hd = 0; hd < heads; ++hd) {
          const Tensor w = softmax_rows(
              scale(matmul_transposed(queries[hd], cross_keys_[l][hd]), inv_sqrt_dk));
          contexts[hd] = matmul(w, cross_values_[l][hd]);
          lt.heads[hd].probs.assign(w.values().begin(), w.values().end());
          lt.heads[hd].halt = frames_;
          lt.heads[hd].reason = HaltReason::kWindow;
        }
        break;
      case HaltingMode::kDacs:
        for (std::size_t hd = 0; hd < heads; ++hd) {
          HeadTrace& ht = lt.heads[hd];
          HaltAccumulator acc(cfg.dacs_threshold);
          ht.halt = window;
          for (std::size_t j = 0; j < window; ++j) {
            const double p = sigmoid_scalar(
                ma_energy_at(queries[hd].row(0), cross_keys_[l][hd].row(j)));
            ht.probs.push_back(p);
            if (acc.add(p)) {
              ht.halt = j + 1;
              ht.reason = HaltReason::kThreshold;
              break;
            }
          }
          contexts[hd] = row_tensor(truncated_context(ht.probs, cross_values_[l][hd]));
        }
        break;
      case HaltingMode::kHsDacs: {
        HaltAccumulator acc(cfg.effective_joint_threshold());
        std::size_t halt = window;
        HaltReason reason = HaltReason::kWindow;
        for (std::size_t j = 0; j < window; ++j) {
          double layer_mass = 0.0;
          for (std::size_t hd = 0; hd < heads; ++hd) {
            const double p = sigmoid_scalar(
                ma_energy_at(queries[hd].row(0), cross_keys_[l][hd].row(j)));
            lt.heads[hd].probs.push_back(p);
            layer_mass += p;
          }
          if (acc.add(layer_mass)) {
            halt = j + 1;
            reason = HaltReason::kThreshold;
            break;
          }
        }
        for (std::size_t hd = 0; hd < heads; ++hd) {
          lt.heads[hd].halt = halt;
          lt.heads[hd].reason = reason;
          contexts[hd] =
              row_tensor(truncated_context(lt.heads[hd].probs, cross_values_[l][hd]));
        }
        break;
      }
    }
    for (const auto& ht : lt.heads) lt.halt = std::max(lt.halt, ht.halt);
    result.state.layer_halts[l] = lt.halt;
    boundary = std::max(boundary, lt.halt);
    x = add(x, layer.cross_attention.output(concat_cols(contexts)));
    result.trace.layers.push_back(std::move(lt));

    x = add(x, layer.ffn(layer.norm_ffn(x)));
  }

  const Tensor log_probs = log_softmax_rows(model_.output()(model_.decoder_norm()(x)));
  result.log_probs.assign(log_probs.values().begin(), log_probs.values().end());
  result.state.t_prev = boundary;
  result.state.step = state.step + 1;
  result.trace.boundary = boundary;
  return result;
}

std::vector<StepResult> StreamingDecoder::force(std::span<const int> input_tokens) const {
  std::vector<StepResult> out;
  HaltingState state;
  DecoderCache cache;
  for (std::size_t i = 0; i < input_tokens.size(); ++i) {
    StepResult r = step(state, input_tokens.first(i + 1), cache);
    r.trace.token = i + 1 < input_tokens.size() ? input_tokens[i + 1] : -1;
    state = r.state;
    out.push_back(std::move(r));
  }
  return out;
}

DecodeResult decode_greedy(const Transformer& model, const EncoderStates& encoder,
                           std::size_t max_len) {
  if (max_len < 1) throw ConfigError("decode_greedy: max_len must be >= 1");
  const StreamingDecoder decoder(model, encoder);
  DecodeResult result;
  result.trace = decoder.empty_trace();
  std::vector<int> prefix{kSosId};
  HaltingState state;
  DecoderCache cache;
  for (std::size_t i = 0; i < max_len; ++i) {
    StepResult r = decoder.step(state, prefix, cache);
    const auto best = std::max_element(r.log_probs.begin(), r.log_probs.end());
    const int token = static_cast<int>(best - r.log_probs.begin());
    result.log_score += *best;
    r.trace.token = token;
    result.trace.steps.push_back(std::move(r.trace));
    state = r.state;
    if (token == kEosId) break;
    result.tokens.push_back(token);
    prefix.push_back(token);
  }
  return result;
}

DecodeResult decode_beam(const Transformer& model, const EncoderStates& encoder,
                         std::size_t width, std::size_t max_len,
                         double length_penalty) {
  if (width == 0) throw ConfigError("decode_beam: beam width must be >= 1");
  if (max_len < 1) throw ConfigError("decode_beam: max_len must be >= 1");
  const StreamingDecoder decoder(model, encoder);
  const std::size_t vocab = model.config().vocab_size;

  std::vector<Hypothesis> alive(1);
  alive[0].tokens = {kSosId};
  alive[0].trace = decoder.empty_trace();
  std::vector<Hypothesis> finished;

  struct Candidate {
    std::size_t parent;
    int token;
    double score;
  };
  auto sequence_less = [&](const Candidate& a, const Candidate& b) {
    const auto& ta = alive[a.parent].tokens;
    const auto& tb = alive[b.parent].tokens;
    const std::size_t n = std::min(ta.size(), tb.size());
    for (std::size_t i = 0; i < n; ++i)
      if (ta[i] != tb[i]) return ta[i] < tb[i];
    if (ta.size() != tb.size()) return ta.size() < tb.size();
    return a.token < b.token;
  };

  for (std::size_t step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<StepResult> results;
    std::vector<DecoderCache> caches;
    std::vector<Candidate> candidates;
    for (std::size_t a = 0; a < alive.size(); ++a) {
      DecoderCache cache = alive[a].cache;
      results.push_back(decoder.step(alive[a].halting, alive[a].tokens, cache));
      caches.push_back(std::move(cache));
      for (std::size_t v = 0; v < vocab; ++v) {
        candidates.push_back(
            {a, static_cast<int>(v), alive[a].log_score + results[a].log_probs[v]});
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [&](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return sequence_less(a, b);
                      });
    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      const Hypothesis& parent = alive[cand.parent];
      Hypothesis child;
      child.tokens = parent.tokens;
      child.tokens.push_back(cand.token);
      child.log_score = cand.score;
      child.halting = results[cand.parent].state;
      child.cache = caches[cand.parent];
      child.trace = parent.trace;
      StepTrace st = results[cand.parent].trace;
      st.token = cand.token;
      child.trace.steps.push_back(std::move(st));
      (cand.token == kEosId ? finished : next).push_back(std::move(child));
    }
    alive = std::move(next);
  }
  for (auto& h : alive) finished.push_back(std::move(h));

  auto normalised = [&](const Hypothesis& h) {
    const double steps = static_cast<double>(h.trace.steps.size());
    return h.log_score / std::pow(steps, length_penalty);
  };
  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  for (const auto& h : finished) {
    const double s = normalised(h);
    if (best == nullptr || s > best_score ||
        (s == best_score && h.tokens < best->tokens)) {
      best = &h;
      best_score = s;
    }
  }
  DecodeResult result;
  result.tokens = strip_markers(best->tokens);
  result.log_score = best->log_score;
  result.trace = best->trace;
  return result;
}

}  // namespace hsdacs
